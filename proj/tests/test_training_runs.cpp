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

// End-to-end runs of the training drivers on a small dataset.

#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>

#include "disent/checkpoint.hpp"
#include "disent/error.hpp"
#include "disent/hash.hpp"
#include "disent/training.hpp"
#include "fd.hpp"

using namespace disent;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

const Dataset& small_data() {
  static const Dataset d = [] {
    PairConfig pc;
    pc.n_per_subset = 10;
    pc.image_res = 32;
    pc.seed = 4;
    return Dataset(build_pairs(pc));
  }();
  return d;
}

TrainConfig small_config(FieldKind mode) {
  TrainConfig c;
  c.model = disent::testing::tiny_config(mode);
  c.loss.mode = mode;
  c.batch_size = 4;
  c.samples_per_image = 64;
  c.epochs = 2;
  c.max_train_items = 8;
  c.checkpoint_every = 1;
  c.validation.examples = 2;
  c.validation.grid_res = 32;
  c.validation.surface_samples = 1000;
  c.optimizer.lr = 1e-3;
  return c;
}

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / "disent3d_train_runs" / name;
  fs::remove_all(p);
  return p;
}

bool same_params(Model<float>& a, Model<float>& b) {
  auto pa = a.params();
  auto pb = b.params();
  if (pa.size() != pb.size()) return false;
  for (std::size_t i = 0; i < pa.size(); ++i) {
    const Mat<float>& x = pa[i].second->value;
    const Mat<float>& y = pb[i].second->value;
    if (pa[i].first != pb[i].first || x.size() != y.size() ||
        std::memcmp(x.data(), y.data(), sizeof(float) * x.size()) != 0) {
      return false;
    }
  }
  return true;
}

}  // namespace

TEST_CASE("pretraining is deterministic and resumable") {
  for (FieldKind mode : {FieldKind::kOccupancy, FieldKind::kSdf}) {
    CAPTURE(static_cast<int>(mode));
    const TrainConfig cfg = small_config(mode);
    TrainOptions o1, o2;
    o1.out_dir = scratch("det1");
    o2.out_dir = scratch("det2");
    TrainResult r1 = pretrain(small_data(), cfg, o1);
    TrainResult r2 = pretrain(small_data(), cfg, o2);
    REQUIRE(r1.report.steps.size() == 4);
    CHECK(r1.report.trajectory_hash() == r2.report.trajectory_hash());
    CHECK(same_params(*r1.last, *r2.last));
    CHECK(same_params(*r1.model, *r2.model));
    for (const StepLoss& s : r1.report.steps) CHECK(std::isfinite(s.total));

    // Continuing from the epoch-1 checkpoint reproduces the uninterrupted run.
    TrainOptions o3;
    o3.out_dir = scratch("resumed");
    o3.resume = o1.out_dir / "epoch_0001.dsck";
    TrainResult r3 = pretrain(small_data(), cfg, o3);
    CHECK(r3.report.steps.size() == 2);
    CHECK(same_params(*r3.last, *r1.last));

    // The loss log has a header plus one row per step.
    std::ifstream csv(o1.out_dir / "loss.csv");
    std::string line;
    int rows = 0;
    std::getline(csv, line);
    CHECK(line == "step,epoch,stage,mode,recon,ls,igr,off,feat,latent,total");
    while (std::getline(csv, line)) ++rows;
    CHECK(rows == 4);

    TrainConfig other = cfg;
    other.stage = Stage::kDisentangle;
    TrainOptions bad;
    bad.resume = o3.resume;
    CHECK_THROWS_AS(train_disentangle(small_data(), *r1.model, other, bad), ConfigError);
  }
}

TEST_CASE("learning rate schedule is recorded per epoch") {
  TrainConfig cfg = small_config(FieldKind::kOccupancy);
  cfg.optimizer.drop_epoch = 1;
  cfg.optimizer.lr_after = 2e-4;
  const TrainResult r = pretrain(small_data(), cfg, {});
  REQUIRE(r.report.epochs.size() == 2);
  CHECK(r.report.epochs[0].lr == cfg.optimizer.lr);
  CHECK(r.report.epochs[1].lr == 2e-4);
  CHECK(r.report.epochs[1].val_chamfer.has_value());
}

TEST_CASE("disentanglement keeps the feature extractor frozen") {
  TrainConfig cfg = small_config(FieldKind::kOccupancy);
  cfg.epochs = 1;
  TrainResult pre = pretrain(small_data(), cfg, {});
  TrainConfig c2 = cfg;
  c2.stage = Stage::kDisentangle;
  TrainResult dis = train_disentangle(small_data(), *pre.model, c2, {});
  CHECK(dis.report.f_checksum_before == dis.report.f_checksum_after);
  CHECK(dis.report.f_checksum_before ==
        hex64(param_checksum(pre.model->params(Part::kExtractor))));
  CHECK(param_checksum(dis.last->params(Part::kExtractor)) ==
        param_checksum(pre.model->params(Part::kExtractor)));
  CHECK(param_checksum(dis.last->params(Part::kHeads)) !=
        param_checksum(pre.model->params(Part::kHeads)));
  for (const StepLoss& s : dis.report.steps) {
    CHECK(s.feat > 0.0);
    CHECK(std::isfinite(s.total));
  }
}

TEST_CASE("divergence names the step") {
  TrainConfig cfg = small_config(FieldKind::kSdf);
  cfg.optimizer.lr = 1e30;
  try {
    pretrain(small_data(), cfg, {});
    FAIL("expected divergence");
  } catch (const DivergenceError& e) {
    CHECK(std::string(e.what()).find("step") != std::string::npos);
    CHECK(e.step >= 0);
    CHECK_FALSE(e.component.empty());
  }

  // A non-finite input image is refused before it reaches the network.
  Model<float> m(disent::testing::tiny_config(FieldKind::kOccupancy));
  const RenderedExample& ex = *small_data().examples(Split::kTrain).front();
  Tensor<float> img = images_to_tensor<float>({&ex.image});
  img.data(0, 5) = std::numeric_limits<float>::quiet_NaN();
  const SampleBatch b = sample_occupancy(ex, 64, kDefaultSigma, 1);
  CHECK_THROWS_AS(pretrain_loss(m, img, {&b}, LossConfig{}, true), InvalidArgument);
}

TEST_CASE("checkpoint round trip and shape validation") {
  Model<float> m(disent::testing::tiny_config(FieldKind::kSdf));
  disent::testing::jitter(m, 3);
  const fs::path dir = scratch("ckpt");
  const fs::path path = dir / "m.dsck";
  std::map<std::string, Mat<float>> state;
  for (auto& [name, p] : m.params()) state[name] = p->value.cwiseAbs();
  save_checkpoint(path, m, {{"stage", "pretrain"}, {"epoch", 7}}, &state);

  Checkpoint ck = load_checkpoint(path);
  CHECK(ck.epoch() == 7);
  CHECK(ck.stage() == Stage::kPretrain);
  CHECK(same_params(*ck.model, m));
  REQUIRE(ck.optimizer_state.size() == state.size());
  for (const auto& [name, v] : state) CHECK(ck.optimizer_state.at(name) == v);

  // Same tensors under a header that claims a longer pose code.
  std::ifstream in(path, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  std::uint64_t len = 0;
  std::memcpy(&len, bytes.data() + 8, sizeof(len));
  json header = json::parse(bytes.substr(16, len));
  header["model"]["latent"][0] = 6;
  const std::string text = header.dump();
  const std::uint64_t new_len = text.size();
  std::string patched = bytes.substr(0, 8);
  patched.append(reinterpret_cast<const char*>(&new_len), sizeof(new_len));
  patched += text;
  patched += bytes.substr(16 + len);
  std::ofstream(dir / "bad_shape.dsck", std::ios::binary) << patched;
  CHECK_THROWS_AS(load_checkpoint(dir / "bad_shape.dsck"), ShapeError);

  std::ofstream(dir / "truncated.dsck", std::ios::binary) << bytes.substr(0, bytes.size() / 2);
  CHECK_THROWS_AS(load_checkpoint(dir / "truncated.dsck"), IoError);
  std::ofstream(dir / "garbage.dsck", std::ios::binary) << "not a checkpoint";
  CHECK_THROWS_AS(load_checkpoint(dir / "garbage.dsck"), IoError);
}
