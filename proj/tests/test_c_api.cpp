// Copyright 2026 The disent3d Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Exercises the shared library through its C header only.

#include <doctest.h>

#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <json.hpp>

#include "disent3d.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json take(char* text) {
  REQUIRE(text != nullptr);
  json j = json::parse(text);
  ds3d_string_free(text);
  return j;
}

fs::path scratch(const char* name) {
  const fs::path p = fs::temp_directory_path() / "disent3d_c_api" / name;
  fs::remove_all(p);
  return p;
}

const char* kTinyTrain = R"({
  "stage": "pretrain",
  "model": {"mode": "occupancy", "image_res": 32, "extractor_channels": [4, 8, 8],
            "feature_channels": 6, "head_channels": 8, "latent": [5, 4, 3],
            "decoder_seed_channels": 8, "decoder_channels": 8, "g_width": 16,
            "g_blocks": 1, "pe_frequencies": 2, "seed": 2},
  "batch_size": 4, "samples_per_image": 64, "epochs": 1, "max_train_items": 8,
  "validation": {"examples": 2, "grid_res": 32, "surface_samples": 1000}
})";

}  // namespace

TEST_CASE("status names and null arguments") {
  CHECK(std::strcmp(ds3d_status_name(DS3D_OK), "ok") == 0);
  CHECK(std::strcmp(ds3d_status_name(DS3D_ERR_DIVERGENCE), "divergence") == 0);
  CHECK(std::strlen(ds3d_version()) > 0);

  CHECK(ds3d_dataset_build("{}", nullptr) == DS3D_ERR_INVALID_ARGUMENT);
  CHECK(std::string(ds3d_last_error()).find("null") != std::string::npos);
  const json err = json::parse(ds3d_last_error_json());
  CHECK(err.at("status") == "invalid_argument");
  CHECK(err.at("code") == 1);

  ds3d_dataset* d = nullptr;
  CHECK(ds3d_dataset_build("[1, 2]", &d) == DS3D_ERR_INVALID_ARGUMENT);
  CHECK(d == nullptr);
  CHECK(ds3d_dataset_build("{not json", &d) == DS3D_ERR_INVALID_ARGUMENT);

  ds3d_model* m = nullptr;
  CHECK(ds3d_model_load("/nonexistent/x.dsck", &m) == DS3D_ERR_IO);
  CHECK(m == nullptr);
  ds3d_dataset_free(nullptr);
  ds3d_model_free(nullptr);
  ds3d_string_free(nullptr);
}

TEST_CASE("dataset, training and manipulation round trip") {
  ds3d_dataset* d = nullptr;
  const ds3d_status built =
      ds3d_dataset_build(R"({"n_per_subset": 10, "image_res": 32, "seed": 5})", &d);
  INFO(std::string(ds3d_last_error()));
  REQUIRE(built == DS3D_OK);
  char* text = nullptr;
  REQUIRE(ds3d_dataset_summary(d, &text) == DS3D_OK);
  const json summary = take(text);
  int pairs = 0;
  for (const auto& [split, per] : summary.at("pairs").items()) {
    for (const auto& [attr, n] : per.items()) pairs += n.get<int>();
  }
  CHECK(pairs == 30);

  const fs::path dir = scratch("data");
  REQUIRE(ds3d_dataset_write(d, dir.string().c_str(), 0) == DS3D_OK);
  ds3d_dataset* reopened = nullptr;
  REQUIRE(ds3d_dataset_open(dir.string().c_str(), &reopened) == DS3D_OK);
  REQUIRE(ds3d_dataset_summary(reopened, &text) == DS3D_OK);
  CHECK(take(text).at("hash") == summary.at("hash"));
  ds3d_dataset_free(reopened);

  // A disentangle run without a pretrained model is a configuration error.
  json stage2 = json::parse(kTinyTrain);
  stage2["stage"] = "disentangle";
  const fs::path run = scratch("run");
  CHECK(ds3d_train(d, stage2.dump().c_str(), nullptr, run.string().c_str(), nullptr, nullptr,
                   nullptr, nullptr) == DS3D_ERR_CONFIG);

  int epochs_seen = 0;
  auto progress = [](const char* epoch_json, void* user) {
    CHECK(json::parse(epoch_json).at("epoch") == 1);
    ++*static_cast<int*>(user);
  };
  REQUIRE(ds3d_train(d, kTinyTrain, nullptr, run.string().c_str(), nullptr, progress,
                     &epochs_seen, &text) == DS3D_OK);
  CHECK(epochs_seen == 1);
  const json report = take(text);
  CHECK(report.at("stage") == "pretrain");
  CHECK(fs::exists(run / "loss.csv"));

  ds3d_model* m = nullptr;
  REQUIRE(ds3d_model_load((run / "best.dsck").string().c_str(), &m) == DS3D_OK);
  REQUIRE(ds3d_model_info(m, &text) == DS3D_OK);
  const json info = take(text);
  CHECK(info.at("model").at("g_width") == 16);
  CHECK_FALSE(info.contains("tensors"));

  // An untrained model may or may not produce a surface; either outcome must
  // come back as a status, with the field range on an empty surface.
  const json manifest = json::parse(std::ifstream(dir / "manifest.json"));
  const std::string pair_id = manifest.at("pairs").at(0).at("id");
  const fs::path swap_dir = scratch("swap");
  const ds3d_status s =
      ds3d_swap(m, d, pair_id.c_str(), "pose", 32, swap_dir.string().c_str(), &text);
  if (s == DS3D_OK) {
    const json prov = take(text);
    CHECK(prov.at("operation") == "swap");
    CHECK(prov.at("pair") == pair_id);
    CHECK(fs::exists(swap_dir / "a_from_b.obj"));
    CHECK(fs::exists(swap_dir / "provenance.json"));
  } else {
    CHECK(s == DS3D_ERR_EMPTY_SURFACE);
    CHECK(json::parse(ds3d_last_error_json()).contains("field_min"));
  }
  CHECK(ds3d_swap(m, d, "no-such-pair", "pose", 32, swap_dir.string().c_str(), &text) ==
        DS3D_ERR_INVALID_ARGUMENT);
  CHECK(ds3d_swap(m, d, pair_id.c_str(), "colour", 32, swap_dir.string().c_str(), &text) ==
        DS3D_ERR_INVALID_ARGUMENT);
  CHECK(ds3d_evaluate(nullptr, nullptr, d, nullptr, swap_dir.string().c_str(), &text) ==
        DS3D_ERR_INVALID_ARGUMENT);

  ds3d_model_free(m);
  ds3d_dataset_free(d);
}
