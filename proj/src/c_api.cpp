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

#include "disent3d.h"

#include <cstdlib>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <memory>
#include <string>

#include <json.hpp>

#include "disent/checkpoint.hpp"
#include "disent/error.hpp"
#include "disent/experiments.hpp"
#include "disent/hash.hpp"
#include "disent/manipulation.hpp"
#include "disent/mesh_io.hpp"
#include "disent/training.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

struct ds3d_dataset {
  std::unique_ptr<disent::Dataset> data;
};

struct ds3d_model {
  disent::Checkpoint ckpt;
};

namespace {

thread_local std::string g_error;
thread_local std::string g_error_json = "{}";

void clear_error() {
  g_error.clear();
  g_error_json = "{}";
}

ds3d_status fail(ds3d_status status, const std::string& message, json extra = json::object()) {
  g_error = message;
  extra["status"] = ds3d_status_name(status);
  extra["code"] = static_cast<int>(status);
  extra["message"] = message;
  g_error_json = extra.dump();
  return status;
}

// Runs `fn`, translating exceptions into status codes.
template <typename Fn>
ds3d_status guarded(Fn&& fn) {
  clear_error();
  try {
    fn();
    return DS3D_OK;
  } catch (const disent::DivergenceError& e) {
    return fail(DS3D_ERR_DIVERGENCE, e.what(), {{"step", e.step}, {"component", e.component}});
  } catch (const disent::EmptySurfaceError& e) {
    return fail(DS3D_ERR_EMPTY_SURFACE, e.what(), {{"field_min", e.min}, {"field_max", e.max}});
  } catch (const disent::Error& e) {
    return fail(static_cast<ds3d_status>(e.code()), e.what());
  } catch (const json::exception& e) {
    return fail(DS3D_ERR_INVALID_ARGUMENT, std::string("json: ") + e.what());
  } catch (const fs::filesystem_error& e) {
    return fail(DS3D_ERR_IO, e.what());
  } catch (const std::bad_alloc&) {
    return fail(DS3D_ERR_INTERNAL, "out of memory");
  } catch (const std::exception& e) {
    return fail(DS3D_ERR_INTERNAL, e.what());
  }
}

void require(const void* p, const char* name) {
  if (p == nullptr) throw disent::InvalidArgument(std::string(name) + " is null");
}

json parse_or_empty(const char* text) {
  if (text == nullptr || *text == '\0') return json::object();
  json j = json::parse(text);
  if (!j.is_object()) throw disent::InvalidArgument("expected a JSON object");
  return j;
}

char* dup_string(const std::string& s) {
  char* out = static_cast<char*>(std::malloc(s.size() + 1));
  if (out == nullptr) throw std::bad_alloc();
  std::memcpy(out, s.c_str(), s.size() + 1);
  return out;
}

void put(char** out, const json& j) {
  if (out != nullptr) *out = dup_string(j.dump(2));
}

void write_json(const json& j, const fs::path& path) {
  std::ofstream f(path);
  if (!f) throw disent::IoError("cannot write " + path.string());
  f << j.dump(2) << '\n';
}

fs::path make_dir(const char* dir) {
  require(dir, "out_dir");
  const fs::path p(dir);
  fs::create_directories(p);
  return p;
}

disent::EvalOptions eval_options(const json& j) {
  disent::EvalOptions o;
  o.grid_res = j.value("grid_res", o.grid_res);
  o.pairs_per_subset = j.value("pairs_per_subset", o.pairs_per_subset);
  o.surface_samples = j.value("surface_samples", o.surface_samples);
  o.seed = j.value("seed", o.seed);
  o.write_meshes = j.value("write_meshes", o.write_meshes);
  if (o.grid_res < 32 || o.pairs_per_subset < 0 || o.surface_samples < 1) {
    throw disent::ConfigError("invalid evaluation options");
  }
  return o;
}

const disent::Model<float>& model_of(const ds3d_model* m) {
  require(m, "model");
  return *m->ckpt.model;
}

const disent::Dataset& data_of(const ds3d_dataset* d) {
  require(d, "dataset");
  return *d->data;
}

}  // namespace

extern "C" {

const char* ds3d_version(void) { return "0.1.0"; }

const char* ds3d_status_name(ds3d_status status) {
  switch (status) {
    case DS3D_OK: return "ok";
    case DS3D_ERR_INVALID_ARGUMENT: return "invalid_argument";
    case DS3D_ERR_STRUCTURE: return "structural_integrity";
    case DS3D_ERR_EMPTY_SURFACE: return "empty_surface";
    case DS3D_ERR_SHAPE: return "shape";
    case DS3D_ERR_CONFIG: return "configuration";
    case DS3D_ERR_DIVERGENCE: return "divergence";
    case DS3D_ERR_IO: return "io";
    case DS3D_ERR_INTERNAL: return "internal";
  }
  return "unknown";
}

const char* ds3d_last_error(void) { return g_error.c_str(); }
const char* ds3d_last_error_json(void) { return g_error_json.c_str(); }

void ds3d_string_free(char* s) { std::free(s); }

ds3d_status ds3d_dataset_build(const char* config_json, ds3d_dataset** out) {
  return guarded([&] {
    require(out, "out");
    *out = nullptr;
    const json j = parse_or_empty(config_json);
    disent::PairConfig c;
    c.n_per_subset = j.value("n_per_subset", c.n_per_subset);
    c.seed = j.value("seed", c.seed);
    c.image_res = j.value("image_res", c.image_res);
    c.mesh_res = j.value("mesh_res", c.mesh_res);
    if (j.contains("pool_sizes")) {
      for (const auto& [name, n] : j.at("pool_sizes").items()) {
        c.pool_sizes[disent::parse_attribute(name)] = n.get<int>();
      }
    }
    auto d = std::make_unique<ds3d_dataset>();
    d->data = std::make_unique<disent::Dataset>(disent::build_pairs(c));
    *out = d.release();
  });
}

ds3d_status ds3d_dataset_open(const char* path, ds3d_dataset** out) {
  return guarded([&] {
    require(out, "out");
    require(path, "path");
    *out = nullptr;
    fs::path p(path);
    if (fs::is_directory(p)) p /= "manifest.json";
    auto d = std::make_unique<ds3d_dataset>();
    d->data = std::make_unique<disent::Dataset>(disent::read_manifest(p));
    *out = d.release();
  });
}

ds3d_status ds3d_dataset_write(const ds3d_dataset* data, const char* dir, int with_meshes) {
  return guarded([&] { data_of(data).write(make_dir(dir), with_meshes != 0); });
}

ds3d_status ds3d_dataset_summary(const ds3d_dataset* data, char** json_out) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    json pairs = json::object();
    for (auto split : {disent::Split::kTrain, disent::Split::kVal, disent::Split::kTest}) {
      json per = json::object();
      for (auto a : {disent::Attribute::kPose, disent::Attribute::kShape,
                     disent::Attribute::kGarment}) {
        per[disent::attribute_name(a)] = d.manifest().select(split, a).size();
      }
      pairs[disent::split_name(split)] = per;
    }
    put(json_out, {{"hash", disent::hex64(d.manifest().hash())},
                   {"examples", d.example_ids().size()},
                   {"pairs", pairs}});
  });
}

void ds3d_dataset_free(ds3d_dataset* data) { delete data; }

ds3d_status ds3d_model_load(const char* checkpoint_path, ds3d_model** out) {
  return guarded([&] {
    require(out, "out");
    require(checkpoint_path, "checkpoint_path");
    *out = nullptr;
    auto m = std::make_unique<ds3d_model>();
    m->ckpt = disent::load_checkpoint(checkpoint_path);
    *out = m.release();
  });
}

ds3d_status ds3d_model_info(const ds3d_model* model, char** json_out) {
  return guarded([&] {
    require(model, "model");
    json h = model->ckpt.header;
    h.erase("tensors");
    put(json_out, h);
  });
}

void ds3d_model_free(ds3d_model* model) { delete model; }

ds3d_status ds3d_train(const ds3d_dataset* data, const char* config_json,
                       const ds3d_model* pretrained, const char* out_dir,
                       const char* resume_path, ds3d_progress_fn progress, void* user,
                       char** report_json) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    require(config_json, "config_json");
    const disent::TrainConfig cfg = json::parse(config_json).get<disent::TrainConfig>();
    disent::TrainOptions opts;
    opts.out_dir = make_dir(out_dir);
    if (resume_path != nullptr && *resume_path != '\0') opts.resume = resume_path;
    if (progress != nullptr) {
      opts.on_epoch = [progress, user](const disent::EpochRecord& r) {
        progress(disent::epoch_json(r).dump().c_str(), user);
      };
    }
    disent::TrainResult r;
    if (cfg.stage == disent::Stage::kPretrain) {
      r = disent::pretrain(d, cfg, opts);
    } else {
      if (pretrained == nullptr) {
        throw disent::ConfigError("the disentangle stage needs a pretrained model");
      }
      r = disent::train_disentangle(d, model_of(pretrained), cfg, opts);
    }
    put(report_json, r.report.to_json());
  });
}

ds3d_status ds3d_swap(const ds3d_model* model, const ds3d_dataset* data, const char* pair_id,
                      const char* attribute, int grid_res, const char* out_dir,
                      char** provenance_json) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    require(pair_id, "pair_id");
    require(attribute, "attribute");
    const disent::PairSpec& p = d.manifest().pair(pair_id);
    const auto& a = d.a(p);
    const auto& b = d.b(p);
    const fs::path dir = make_dir(out_dir);
    const disent::SwapResult r =
        disent::swap_reconstruct(a.image, b.image, disent::parse_attribute(attribute),
                                 model_of(model), grid_res, a.id, b.id);
    disent::write_obj(r.a_from_b.mesh, dir / "a_from_b.obj");
    disent::write_obj(r.b_from_a.mesh, dir / "b_from_a.obj");
    json prov = r.provenance;
    prov["pair"] = p.id;
    prov["meshes"] = {{"a_from_b", "a_from_b.obj"}, {"b_from_a", "b_from_a.obj"}};
    write_json(prov, dir / "provenance.json");
    put(provenance_json, prov);
  });
}

ds3d_status ds3d_recombine(const ds3d_model* model, const ds3d_dataset* data,
                           const char* spec_json, int grid_res, const char* out_dir,
                           char** provenance_json) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    require(spec_json, "spec_json");
    const disent::EditSpec spec = json::parse(spec_json).get<disent::EditSpec>();
    std::map<std::string, const disent::Image*> images;
    for (const auto& [attr, src] : spec.sources) {
      for (const auto& id : src.ids) images[id] = &d.example(id).image;
    }
    const fs::path dir = make_dir(out_dir);
    const disent::EditResult r = disent::recombine(spec, images, model_of(model), grid_res);
    disent::write_obj(r.recon.mesh, dir / "recombined.obj");
    json prov = r.provenance;
    prov["meshes"] = {"recombined.obj"};
    write_json(prov, dir / "provenance.json");
    put(provenance_json, prov);
  });
}

ds3d_status ds3d_interpolate(const ds3d_model* model, const ds3d_dataset* data,
                             const char* id_a, const char* id_b, const char* attribute,
                             int steps, int grid_res, const char* out_dir,
                             char** provenance_json) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    require(id_a, "id_a");
    require(id_b, "id_b");
    require(attribute, "attribute");
    const fs::path dir = make_dir(out_dir);
    const auto results =
        disent::interpolate(d.example(id_a).image, d.example(id_b).image,
                            disent::parse_attribute(attribute), steps, model_of(model),
                            grid_res, id_a, id_b);
    json prov = {{"operation", "interpolate"}, {"steps", json::array()}};
    for (std::size_t s = 0; s < results.size(); ++s) {
      const std::string name = "step_" + std::to_string(s) + ".obj";
      disent::write_obj(results[s].recon.mesh, dir / name);
      json step = results[s].provenance;
      step["mesh"] = name;
      prov["steps"].push_back(step);
    }
    write_json(prov, dir / "provenance.json");
    put(provenance_json, prov);
  });
}

ds3d_status ds3d_evaluate(const ds3d_model* occ, const ds3d_model* sdf,
                          const ds3d_dataset* data, const char* options_json,
                          const char* out_dir, char** report_json) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    if (occ == nullptr && sdf == nullptr) throw disent::InvalidArgument("no model given");
    disent::EvalOptions o = eval_options(parse_or_empty(options_json));
    o.out_dir = make_dir(out_dir);
    const disent::ExperimentReport rep = disent::run_eval_suite(
        occ ? &model_of(occ) : nullptr, sdf ? &model_of(sdf) : nullptr, d, o);
    rep.write(o.out_dir);
    put(report_json, rep.to_json());
  });
}

ds3d_status ds3d_ablate(const ds3d_dataset* data, const ds3d_model* pretrained,
                        const char* ablation_json, const char* out_dir, char** report_json) {
  return guarded([&] {
    const disent::Dataset& d = data_of(data);
    const json j = parse_or_empty(ablation_json);
    disent::TrainConfig base = j.contains("base") ? j.at("base").get<disent::TrainConfig>()
                                                  : disent::TrainConfig{};
    base.stage = disent::Stage::kDisentangle;
    std::vector<std::array<int, 3>> latents = disent::default_ablation_latents();
    if (j.contains("latents")) latents = j.at("latents").get<std::vector<std::array<int, 3>>>();
    disent::EvalOptions o = eval_options(j.value("eval", json::object()));
    o.out_dir = make_dir(out_dir);
    const disent::ExperimentReport rep =
        disent::run_ablation(d, model_of(pretrained), base, latents, o);
    rep.write(o.out_dir);
    put(report_json, rep.to_json());
  });
}

}  // extern "C"
