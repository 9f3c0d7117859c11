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


#include "disent/checkpoint.hpp"

#include <fmt/format.h>

#include <cmath>
#include <cstring>
#include <fstream>

#include "disent/error.hpp"
#include "disent/hash.hpp"

namespace disent {

using nlohmann::json;

const char* stage_name(Stage s) { return s == Stage::kPretrain ? "pretrain" : "disentangle"; }

Stage parse_stage(const std::string& name) {
  if (name == "pretrain") return Stage::kPretrain;
  if (name == "disentangle") return Stage::kDisentangle;
  throw ConfigError("unknown stage '" + name + "'");
}

RmsProp::RmsProp(nn::ParamRefs<float> params, double alpha, double eps)
    : params_(std::move(params)), alpha_(alpha), eps_(eps) {
  if (!(alpha >= 0.0 && alpha < 1.0) || !(eps > 0.0)) throw ConfigError("bad rmsprop constants");
  for (auto& [name, p] : params_) {
    square_avg_[name] = Mat<float>::Zero(p->value.rows(), p->value.cols());
    if (p->grad.size() != p->value.size()) p->zero_grad();
  }
}

void RmsProp::zero_grad() {
  for (auto& [name, p] : params_) p->grad.setZero();
}

void RmsProp::step(double lr) {
  const float a = static_cast<float>(alpha_);
  const float e = static_cast<float>(eps_);
  const float l = static_cast<float>(lr);
  for (auto& [name, p] : params_) {
    Mat<float>& v = square_avg_.at(name);
    v.array() = a * v.array() + (1.0f - a) * p->grad.array().square();
    p->value.array() -= l * p->grad.array() / (v.array().sqrt() + e);
  }
}

Stage Checkpoint::stage() const { return parse_stage(header.value("stage", "pretrain")); }
int Checkpoint::epoch() const { return header.value("epoch", 0); }

namespace {

constexpr char kMagic[4] = {'D', 'S', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;

}  // namespace

void save_checkpoint(const std::filesystem::path& path, Model<float>& model, const json& extra,
                     const std::map<std::string, Mat<float>>* optimizer_state) {
  json header = extra;
  header["format"] = "disent3d-checkpoint";
  header["model"] = model.config();
  header["checksums"] = {{"f", hex64(param_checksum(model.params(Part::kExtractor)))},
                         {"all", hex64(param_checksum(model.params()))}};
  std::vector<std::pair<std::string, const Mat<float>*>> tensors;
  for (auto& [name, p] : model.params()) tensors.emplace_back(name, &p->value);
  if (optimizer_state) {
    for (const auto& [name, m] : *optimizer_state) tensors.emplace_back("opt." + name, &m);
  }
  json list = json::array();
  for (const auto& [name, m] : tensors) list.push_back({{"name", name}, {"rows", m->rows()}, {"cols", m->cols()}});
  header["tensors"] = list;
  header["has_optimizer_state"] = optimizer_state != nullptr;

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  const std::filesystem::path tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw IoError("cannot write " + tmp.string());
    const std::string text = header.dump();
    const std::uint64_t len = text.size();
    out.write(kMagic, 4);
    out.write(reinterpret_cast<const char*>(&kVersion), sizeof(kVersion));
    out.write(reinterpret_cast<const char*>(&len), sizeof(len));
    out.write(text.data(), static_cast<std::streamsize>(len));
    for (const auto& [name, m] : tensors) {
      out.write(reinterpret_cast<const char*>(m->data()),
                static_cast<std::streamsize>(sizeof(float) * m->size()));
    }
    if (!out) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open checkpoint " + path.string());
  char magic[4];
  std::uint32_t version = 0;
  std::uint64_t len = 0;
  in.read(magic, 4);
  in.read(reinterpret_cast<char*>(&version), sizeof(version));
  in.read(reinterpret_cast<char*>(&len), sizeof(len));
  if (!in || std::memcmp(magic, kMagic, 4) != 0) throw IoError(path.string() + " is not a checkpoint");
  if (version != kVersion) throw IoError(fmt::format("unsupported checkpoint version {}", version));
  if (len > (1u << 26)) throw IoError("checkpoint header too large");
  std::string text(len, '\0');
  in.read(text.data(), static_cast<std::streamsize>(len));
  if (!in) throw IoError("truncated checkpoint header");

  Checkpoint ck;
  try {
    ck.header = json::parse(text);
  } catch (const json::exception& e) {
    throw IoError(std::string("bad checkpoint header: ") + e.what());
  }
  ck.model = std::make_unique<Model<float>>(ck.header.at("model").get<ModelConfig>());
  std::map<std::string, nn::Param<float>*> by_name;
  for (auto& [name, p] : ck.model->params()) by_name[name] = p;

  std::size_t loaded = 0;
  for (const auto& t : ck.header.at("tensors")) {
    const std::string name = t.at("name");
    const Eigen::Index rows = t.at("rows"), cols = t.at("cols");
    Mat<float> m(rows, cols);
    in.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(float) * m.size()));
    if (!in) throw IoError("truncated checkpoint tensor " + name);
    if (name.rfind("opt.", 0) == 0) {
      const std::string pname = name.substr(4);
      auto it = by_name.find(pname);
      if (it == by_name.end() || it->second->value.rows() != rows || it->second->value.cols() != cols) {
        throw ShapeError("optimizer state does not match parameter " + pname);
      }
      ck.optimizer_state[pname] = std::move(m);
      continue;
    }
    auto it = by_name.find(name);
    if (it == by_name.end()) throw ShapeError("checkpoint holds unknown parameter " + name);
    nn::Param<float>& p = *it->second;
    if (p.value.rows() != rows || p.value.cols() != cols) {
      throw ShapeError(fmt::format("parameter {} stored as {}x{}, model expects {}x{}", name, rows,
                                   cols, p.value.rows(), p.value.cols()));
    }
    p.value = std::move(m);
    ++loaded;
  }
  if (loaded != by_name.size()) {
    throw ShapeError(fmt::format("checkpoint holds {} of {} parameters", loaded, by_name.size()));
  }
  return ck;
}

}  // namespace disent
