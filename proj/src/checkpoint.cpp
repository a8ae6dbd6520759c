// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

#include "laf/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>

namespace laf {
namespace {

constexpr char kModelMagic[4] = {'L', 'A', 'F', 'M'};
constexpr char kVaeMagic[4] = {'L', 'A', 'F', 'V'};
constexpr std::uint32_t kFormatVersion = 1;

void write_params(std::ofstream& out, const char magic[4], const std::vector<const Matrix*>& params) {
  out.write(magic, 4);
  out.write(reinterpret_cast<const char*>(&kFormatVersion), sizeof kFormatVersion);
  const auto count = static_cast<std::uint64_t>(params.size());
  out.write(reinterpret_cast<const char*>(&count), sizeof count);
  for (const Matrix* p : params) {
    const std::int64_t dims[2] = {p->rows(), p->cols()};
    out.write(reinterpret_cast<const char*>(dims), sizeof dims);
    out.write(reinterpret_cast<const char*>(p->data()),
              static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->size())));
  }
}

void read_params(const std::filesystem::path& path, const char magic[4],
                 const std::vector<Matrix*>& params) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open checkpoint " + path.string());
  auto fail = [&](const std::string& why) {
    throw ParseError("checkpoint " + path.string() + ": " + why + " at offset " +
                     std::to_string(static_cast<long long>(in.tellg())));
  };
  char tag[4];
  if (!in.read(tag, 4) || std::memcmp(tag, magic, 4) != 0) fail("bad magic");
  std::uint32_t version = 0;
  if (!in.read(reinterpret_cast<char*>(&version), sizeof version) || version != kFormatVersion) {
    fail("unsupported format version");
  }
  std::uint64_t count = 0;
  in.read(reinterpret_cast<char*>(&count), sizeof count);
  if (!in || count != params.size()) fail("parameter count does not match the architecture");
  for (Matrix* p : params) {
    std::int64_t dims[2];
    if (!in.read(reinterpret_cast<char*>(dims), sizeof dims)) fail("truncated header");
    if (dims[0] != p->rows() || dims[1] != p->cols()) fail("parameter shape mismatch");
    if (!in.read(reinterpret_cast<char*>(p->data()),
                 static_cast<std::streamsize>(sizeof(double) * static_cast<std::size_t>(p->size())))) {
      fail("truncated payload");
    }
  }
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open sidecar " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("sidecar " + path.string() + ": " + e.what());
  }
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::ofstream open_binary(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  return out;
}

}  // namespace

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint) {
  return checkpoint.string() + ".json";
}

void save_model(const ClassifierModel& model, const std::filesystem::path& path, const ModelMeta& meta) {
  {
    auto out = open_binary(path);
    std::vector<const Matrix*> params = model.extractor.params();
    for (const Matrix* p : model.head.params()) params.push_back(p);
    write_params(out, kModelMagic, params);
  }
  const auto& s = model.input_shape;
  write_json(sidecar_path(path),
             {{"arch_id", to_string(model.arch)},
              {"rep_dim", model.rep_dim},
              {"num_classes", model.num_classes},
              {"seed", model.seed},
              {"config_hash", meta.config_hash},
              {"method", meta.method},
              {"input_shape", {s.channels, s.height, s.width}},
              {"mlp_hidden", meta.arch_options.mlp_hidden},
              {"resnet_base_width", meta.arch_options.resnet_base_width},
              {"model_hash", model_hash(model)}});
}

LoadedModel load_model(const std::filesystem::path& path) {
  LoadedModel out;
  out.sidecar = read_json(sidecar_path(path));
  const auto& j = out.sidecar;
  InputShape shape;
  try {
    out.meta.config_hash = j.value("config_hash", "");
    out.meta.method = j.value("method", "original");
    out.meta.arch_options.rep_dim = j.at("rep_dim").get<int>();
    out.meta.arch_options.mlp_hidden = j.value("mlp_hidden", std::vector<int>{128});
    out.meta.arch_options.resnet_base_width = j.value("resnet_base_width", 64);
    const auto dims = j.at("input_shape").get<std::vector<int>>();
    if (dims.size() != 3) throw ParseError("input_shape must have three entries");
    shape = {dims[0], dims[1], dims[2]};
    out.model = build_model(arch_from_string(j.at("arch_id").get<std::string>()), shape,
                            j.at("num_classes").get<int>(), j.at("seed").get<std::uint64_t>(),
                            out.meta.arch_options);
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
  std::vector<Matrix*> params = out.model.extractor.params();
  for (Matrix* p : out.model.head.params()) params.push_back(p);
  read_params(path, kModelMagic, params);
  if (j.contains("model_hash") && j["model_hash"].get<std::string>() != model_hash(out.model)) {
    throw ParseError("checkpoint " + path.string() + ": weights do not match the sidecar hash");
  }
  return out;
}

void save_vae(const VaeModel& vae, const std::filesystem::path& path) {
  {
    auto out = open_binary(path);
    std::vector<const Matrix*> params = vae.encoder.params();
    for (const Matrix* p : vae.decoder.params()) params.push_back(p);
    write_params(out, kVaeMagic, params);
  }
  write_json(sidecar_path(path), {{"role_tag", to_string(vae.role)},
                                  {"latent_dim", vae.latent_dim},
                                  {"rep_dim", vae.rep_dim},
                                  {"source_model_hash", vae.source_model_hash},
                                  {"train_set", vae.train_set}});
}

VaeModel load_vae(const std::filesystem::path& path) {
  const auto j = read_json(sidecar_path(path));
  VaeModel vae;
  try {
    vae = build_vae(vae_role_from_string(j.at("role_tag").get<std::string>()), j.at("rep_dim").get<int>(),
                    j.at("latent_dim").get<int>(), 0);
    vae.source_model_hash = j.value("source_model_hash", "");
    vae.train_set = j.value("train_set", "full");
  } catch (const nlohmann::json::exception& e) {
    throw ParseError("sidecar " + sidecar_path(path).string() + ": " + e.what());
  }
  std::vector<Matrix*> params = vae.encoder.params();
  for (Matrix* p : vae.decoder.params()) params.push_back(p);
  read_params(path, kVaeMagic, params);
  return vae;
}

}  // namespace laf
