#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artadapter/checkpoint.hpp"
#include "artadapter/dataset.hpp"
#include "artadapter/model.hpp"
#include "artadapter/optimizer.hpp"

namespace artadapter {

TrainPhase phase_from_string(const std::string& name);

// One noise-prediction optimization step. The style reference and ACA content
// image are the training image itself; the caption belongs to it. Every
// random draw comes from a stream derived from (seed, step, slot), so a step
// is reproducible in isolation. Returns the scalar loss; a non-finite loss
// raises NumericError with diagnostics.
scalar_t training_step(Model& model, const Dataset& data, const TrainConfig& tc,
                       TrainPhase phase, int64_t step, AdamW& opt);

struct TrainResult {
    std::string checkpoint_path;
    std::string loss_csv_path;
    std::vector<scalar_t> losses;  // one entry per step
};

// Runs tc.max_steps steps of the configured phase. "base" builds a fresh
// model and trains backbone+text encoder with text-only conditioning;
// "adapter" loads tc.init_checkpoint, freezes the base stack and trains the
// style pathway. Writes the loss CSV and the final checkpoint under out_dir.
TrainResult train(const TrainConfig& tc, const std::string& manifest_path,
                  const std::string& out_dir);

// Optimizes only the delta_h vectors against the given reference images
// (which serve as data and style alike, under an empty prompt), then writes
// the sidecar. The model must carry a trained (or at least built) pipeline;
// everything outside the residuals stays bit-identical.
SidecarMeta fast_finetune(Model& model, const std::vector<Tensor>& style_refs,
                          const std::string& sidecar_path, int64_t steps = 25,
                          scalar_t lr = 0.02, uint64_t seed = 1);

}  // namespace artadapter
