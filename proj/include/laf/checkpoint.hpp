// Copyright 2026 The LAF Authors
// SPDX-License-Identifier: Apache-2.0

// Binary weight files with JSON sidecars (<file>.json). The binary holds a
// magic tag, a format version and every parameter matrix in collect order;
// the sidecar holds what is needed to rebuild the architecture.

#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "laf/model.hpp"
#include "laf/vae.hpp"

namespace laf {

struct ModelMeta {
  std::string config_hash;
  std::string method = "original";
  ArchOptions arch_options;
};

std::filesystem::path sidecar_path(const std::filesystem::path& checkpoint);

void save_model(const ClassifierModel& model, const std::filesystem::path& path,
                const ModelMeta& meta = {});

struct LoadedModel {
  ClassifierModel model;
  ModelMeta meta;
  nlohmann::json sidecar;
};

LoadedModel load_model(const std::filesystem::path& path);

void save_vae(const VaeModel& vae, const std::filesystem::path& path);
VaeModel load_vae(const std::filesystem::path& path);

}  // namespace laf
