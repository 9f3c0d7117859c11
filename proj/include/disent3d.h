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

/* C interface to the disent3d core. Objects are opaque handles; every call
 * returns a status code and leaves a message for ds3d_last_error() on
 * failure. Strings returned through char** are heap allocated and must be
 * released with ds3d_string_free. JSON documents are UTF-8 text. */

#ifndef DISENT3D_H_
#define DISENT3D_H_

#ifdef __cplusplus
extern "C" {
#endif

#if defined(_WIN32)
#define DS3D_API __declspec(dllexport)
#else
#define DS3D_API __attribute__((visibility("default")))
#endif

typedef enum ds3d_status {
  DS3D_OK = 0,
  DS3D_ERR_INVALID_ARGUMENT = 1,
  DS3D_ERR_STRUCTURE = 2,
  DS3D_ERR_EMPTY_SURFACE = 3,
  DS3D_ERR_SHAPE = 4,
  DS3D_ERR_CONFIG = 5,
  DS3D_ERR_DIVERGENCE = 6,
  DS3D_ERR_IO = 7,
  DS3D_ERR_INTERNAL = 8
} ds3d_status;

typedef struct ds3d_dataset ds3d_dataset;
typedef struct ds3d_model ds3d_model;

DS3D_API const char* ds3d_version(void);
DS3D_API const char* ds3d_status_name(ds3d_status status);

/* Message of the last failed call on this thread ("" if none). */
DS3D_API const char* ds3d_last_error(void);
/* The same failure as a JSON object: {"status", "code", "message", ...};
 * divergence adds "step" and "component". "{}" if none. */
DS3D_API const char* ds3d_last_error_json(void);

DS3D_API void ds3d_string_free(char* s);

/* Dataset. config_json holds pairing options (n_per_subset, seed,
 * image_res, mesh_res, pool_sizes); NULL or "{}" uses defaults. */
DS3D_API ds3d_status ds3d_dataset_build(const char* config_json, ds3d_dataset** out);
/* Re-renders a dataset from a manifest.json (or a directory holding one). */
DS3D_API ds3d_status ds3d_dataset_open(const char* path, ds3d_dataset** out);
DS3D_API ds3d_status ds3d_dataset_write(const ds3d_dataset* data, const char* dir,
                                        int with_meshes);
/* {"hash", "examples", "pairs": {split: {attribute: count}}} */
DS3D_API ds3d_status ds3d_dataset_summary(const ds3d_dataset* data, char** json_out);
DS3D_API void ds3d_dataset_free(ds3d_dataset* data);

/* Models are loaded from checkpoints. */
DS3D_API ds3d_status ds3d_model_load(const char* checkpoint_path, ds3d_model** out);
/* Checkpoint header (model config, stage, epoch, checksums). */
DS3D_API ds3d_status ds3d_model_info(const ds3d_model* model, char** json_out);
DS3D_API void ds3d_model_free(ds3d_model* model);

/* Called after every epoch with the epoch record as JSON. */
typedef void (*ds3d_progress_fn)(const char* epoch_json, void* user);

/* Trains one stage described by config_json (a training config; its "stage"
 * selects pretrain or disentangle). Disentangle needs `pretrained`; pretrain
 * ignores it. resume_path may be NULL. The report is the run's
 * report.json, also written to out_dir. */
DS3D_API ds3d_status ds3d_train(const ds3d_dataset* data, const char* config_json,
                                const ds3d_model* pretrained, const char* out_dir,
                                const char* resume_path, ds3d_progress_fn progress,
                                void* user, char** report_json);

/* Manipulation. Images are dataset examples named by id. Each call writes
 * OBJ meshes and provenance.json into out_dir and returns the provenance. */
DS3D_API ds3d_status ds3d_swap(const ds3d_model* model, const ds3d_dataset* data,
                               const char* pair_id, const char* attribute, int grid_res,
                               const char* out_dir, char** provenance_json);
DS3D_API ds3d_status ds3d_recombine(const ds3d_model* model, const ds3d_dataset* data,
                                    const char* spec_json, int grid_res, const char* out_dir,
                                    char** provenance_json);
DS3D_API ds3d_status ds3d_interpolate(const ds3d_model* model, const ds3d_dataset* data,
                                      const char* id_a, const char* id_b,
                                      const char* attribute, int steps, int grid_res,
                                      const char* out_dir, char** provenance_json);

/* Experiments. options_json: {grid_res, pairs_per_subset, surface_samples,
 * seed, write_meshes}; NULL uses defaults. Either model may be NULL, not
 * both. */
DS3D_API ds3d_status ds3d_evaluate(const ds3d_model* occ, const ds3d_model* sdf,
                                   const ds3d_dataset* data, const char* options_json,
                                   const char* out_dir, char** report_json);
/* ablation_json: {"base": training config, "latents": [[t, b, g], ...],
 * "eval": options}. Missing latents use the default four rows. */
DS3D_API ds3d_status ds3d_ablate(const ds3d_dataset* data, const ds3d_model* pretrained,
                                 const char* ablation_json, const char* out_dir,
                                 char** report_json);

#ifdef __cplusplus
}
#endif

#endif /* DISENT3D_H_ */
