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

// Command-line front end. Everything goes through the C API.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "disent3d.h"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

// Status carried out of a subcommand; non-OK exits with the status value.
struct Failure {
  ds3d_status status;
};

void check(ds3d_status s) {
  if (s != DS3D_OK) throw Failure{s};
}

std::string read_text(const std::string& path) {
  std::ifstream f(path);
  if (!f) {
    std::cerr << "cannot read " << path << '\n';
    throw Failure{DS3D_ERR_IO};
  }
  std::stringstream ss;
  ss << f.rdbuf();
  return ss.str();
}

json parse_file(const std::string& path) {
  try {
    return json::parse(read_text(path));
  } catch (const json::exception& e) {
    std::cerr << path << ": " << e.what() << '\n';
    throw Failure{DS3D_ERR_INVALID_ARGUMENT};
  }
}

// Prints and frees a returned JSON string.
void emit(char* text) {
  if (text == nullptr) return;
  std::cout << text << '\n';
  ds3d_string_free(text);
}

struct Dataset {
  ds3d_dataset* h = nullptr;
  explicit Dataset(const std::string& path) { check(ds3d_dataset_open(path.c_str(), &h)); }
  ~Dataset() { ds3d_dataset_free(h); }
};

struct Model {
  ds3d_model* h = nullptr;
  explicit Model(const std::string& path) {
    if (!path.empty()) check(ds3d_model_load(path.c_str(), &h));
  }
  ~Model() { ds3d_model_free(h); }
};

void print_epoch(const char* epoch_json, void*) {
  const json e = json::parse(epoch_json);
  std::string val = "-";
  if (!e.at("val_chamfer").is_null()) val = std::to_string(e.at("val_chamfer").get<double>());
  std::fprintf(stderr, "epoch %d loss %.6f val %s (%.1fs)\n", e.at("epoch").get<int>(),
               e.at("loss").at("total").get<double>(), val.c_str(),
               e.at("seconds").get<double>());
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"disent3d: attribute-disentangled 3D reconstruction from single images"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(ds3d_version()));

  std::string data, out, config, stage, resume, pretrained, model, pair, attr, spec, id_a, id_b,
      occ, sdf, configs;
  long long seed = -1;
  int grid = 64, steps = 5, pairs = 300, pairs_eval = 0, samples = 4000, image_res = 64,
      mesh_res = 48;
  bool no_meshes = false;

  auto* c_data = app.add_subcommand("dataset", "Generate the paired synthetic dataset");
  c_data->add_option("--out", out, "Output directory")->required();
  c_data->add_option("--pairs", pairs, "Pairs per attribute subset");
  c_data->add_option("--seed", seed, "Generator seed");
  c_data->add_option("--image-res", image_res, "Rendered image size");
  c_data->add_option("--mesh-res", mesh_res, "Ground-truth marching cubes resolution");
  c_data->add_flag("--no-meshes", no_meshes, "Skip writing OBJ ground truth");

  auto* c_train = app.add_subcommand("train", "Run one training stage");
  c_train->add_option("--data", data, "Dataset directory or manifest")->required();
  c_train->add_option("--config", config, "Training config (JSON)")->required();
  c_train->add_option("--stage", stage, "Overrides the config's stage")
      ->check(CLI::IsMember({"pretrain", "disentangle"}));
  c_train->add_option("--resume", resume, "Checkpoint to continue from");
  c_train->add_option("--pretrained", pretrained, "Stage-1 checkpoint (disentangle)");
  c_train->add_option("--seed", seed, "Overrides the config's seed");
  c_train->add_option("--out", out, "Run directory")->required();

  auto add_model_opts = [&](CLI::App* c) {
    c->add_option("--data", data, "Dataset directory or manifest")->required();
    c->add_option("--model", model, "Stage-2 checkpoint")->required();
    c->add_option("--grid", grid, "Marching cubes resolution");
    c->add_option("--out", out, "Output directory")->required();
  };
  auto* c_swap = app.add_subcommand("swap", "Swap one attribute between the images of a pair");
  add_model_opts(c_swap);
  c_swap->add_option("--pair", pair, "Pair id")->required();
  c_swap->add_option("--attr", attr, "Attribute")
      ->required()
      ->check(CLI::IsMember({"pose", "shape", "garment"}));

  auto* c_rec = app.add_subcommand("recombine", "Assemble codes from several images");
  add_model_opts(c_rec);
  c_rec->add_option("--spec", spec, "Edit spec (JSON)")->required();

  auto* c_interp = app.add_subcommand("interp", "Interpolate one attribute between two images");
  add_model_opts(c_interp);
  c_interp->add_option("--a", id_a, "Example id at weight 0")->required();
  c_interp->add_option("--b", id_b, "Example id at weight 1")->required();
  c_interp->add_option("--attr", attr, "Attribute")
      ->required()
      ->check(CLI::IsMember({"pose", "shape", "garment"}));
  c_interp->add_option("--steps", steps, "Number of meshes (>= 2)");

  auto* c_eval = app.add_subcommand("evaluate", "Self/cross/direct reconstruction tables");
  c_eval->add_option("--data", data, "Dataset directory or manifest")->required();
  c_eval->add_option("--occ", occ, "Occupancy-mode checkpoint");
  c_eval->add_option("--sdf", sdf, "SDF-mode checkpoint");
  c_eval->add_option("--out", out, "Report directory")->required();
  c_eval->add_option("--grid", grid, "Marching cubes resolution");
  c_eval->add_option("--pairs", pairs_eval, "Test pairs per subset (0 = all)");
  c_eval->add_option("--samples", samples, "Surface samples per metric");
  c_eval->add_option("--seed", seed, "Metric sampling seed");
  c_eval->add_flag("--no-meshes", no_meshes, "Do not store meshes");

  auto* c_abl = app.add_subcommand("ablate", "Latent-size ablation");
  c_abl->add_option("--data", data, "Dataset directory or manifest")->required();
  c_abl->add_option("--configs", configs, "Ablation file (JSON)")->required();
  c_abl->add_option("--pretrained", pretrained, "Stage-1 checkpoint (else the file's)");
  c_abl->add_option("--out", out, "Report directory")->required();

  auto* c_info = app.add_subcommand("info", "Print a checkpoint header");
  c_info->add_option("--model", model, "Checkpoint")->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (c_data->parsed()) {
      json cfg = {{"n_per_subset", pairs}, {"image_res", image_res}, {"mesh_res", mesh_res}};
      if (seed >= 0) cfg["seed"] = seed;
      ds3d_dataset* h = nullptr;
      check(ds3d_dataset_build(cfg.dump().c_str(), &h));
      const ds3d_status s = ds3d_dataset_write(h, out.c_str(), no_meshes ? 0 : 1);
      char* summary = nullptr;
      if (s == DS3D_OK) ds3d_dataset_summary(h, &summary);
      ds3d_dataset_free(h);
      check(s);
      emit(summary);
    } else if (c_train->parsed()) {
      json cfg = parse_file(config);
      if (!stage.empty()) cfg["stage"] = stage;
      if (seed >= 0) cfg["seed"] = seed;
      Dataset d(data);
      Model pre(pretrained);
      char* report = nullptr;
      check(ds3d_train(d.h, cfg.dump().c_str(), pre.h, out.c_str(),
                       resume.empty() ? nullptr : resume.c_str(), print_epoch, nullptr,
                       &report));
      emit(report);
    } else if (c_swap->parsed() || c_rec->parsed() || c_interp->parsed()) {
      Dataset d(data);
      Model m(model);
      char* prov = nullptr;
      if (c_swap->parsed()) {
        check(ds3d_swap(m.h, d.h, pair.c_str(), attr.c_str(), grid, out.c_str(), &prov));
      } else if (c_rec->parsed()) {
        const std::string text = parse_file(spec).dump();
        check(ds3d_recombine(m.h, d.h, text.c_str(), grid, out.c_str(), &prov));
      } else {
        check(ds3d_interpolate(m.h, d.h, id_a.c_str(), id_b.c_str(), attr.c_str(), steps, grid,
                               out.c_str(), &prov));
      }
      emit(prov);
    } else if (c_eval->parsed()) {
      if (occ.empty() && sdf.empty()) {
        std::cerr << "evaluate needs --occ and/or --sdf\n";
        return DS3D_ERR_INVALID_ARGUMENT;
      }
      json opts = {{"grid_res", grid},
                   {"pairs_per_subset", pairs_eval},
                   {"surface_samples", samples},
                   {"write_meshes", !no_meshes}};
      if (seed >= 0) opts["seed"] = seed;
      Dataset d(data);
      Model mo(occ), ms(sdf);
      char* report = nullptr;
      check(ds3d_evaluate(mo.h, ms.h, d.h, opts.dump().c_str(), out.c_str(), &report));
      ds3d_string_free(report);
      std::cout << read_text((fs::path(out) / "report.txt").string());
    } else if (c_abl->parsed()) {
      const json spec_json = parse_file(configs);
      if (pretrained.empty()) pretrained = spec_json.value("pretrained", std::string());
      if (pretrained.empty()) {
        std::cerr << "ablate needs a pretrained checkpoint (--pretrained or \"pretrained\")\n";
        return DS3D_ERR_INVALID_ARGUMENT;
      }
      Dataset d(data);
      Model pre(pretrained);
      char* report = nullptr;
      check(ds3d_ablate(d.h, pre.h, spec_json.dump().c_str(), out.c_str(), &report));
      ds3d_string_free(report);
      std::cout << read_text((fs::path(out) / "report.txt").string());
    } else if (c_info->parsed()) {
      Model m(model);
      char* info = nullptr;
      check(ds3d_model_info(m.h, &info));
      emit(info);
    }
  } catch (const Failure& f) {
    const std::string record = ds3d_last_error_json();
    std::cerr << record << '\n';
    if (!out.empty() && record != "{}") {
      std::error_code ec;
      fs::create_directories(out, ec);
      std::ofstream(fs::path(out) / "error.json") << record << '\n';
    }
    return static_cast<int>(f.status);
  }
  // A record left by an earlier failed run would misdescribe this one.
  if (!out.empty()) {
    std::error_code ec;
    fs::remove(fs::path(out) / "error.json", ec);
  }
  return 0;
}
