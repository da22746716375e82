#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artadapter/model.hpp"

namespace artadapter {

// A fully restored model plus its training metadata.
struct Checkpoint {
    Model model;
    int64_t step = 0;
    uint64_t seed = 0;
};

// Container layout: magic, version, JSON header (config, metadata, vocab,
// section hashes, tensor index), raw double payload in index order, FNV-1a
// trailer over everything before it. Any corruption or version skew is a
// LoadError.
void save_checkpoint(const Model& model, int64_t step, uint64_t seed, const std::string& path);
Checkpoint load_checkpoint(const std::string& path);

// Finetune sidecar: the delta_h vectors keyed by projection path and kind,
// plus the provenance needed to decide whether they apply.
struct SidecarMeta {
    uint64_t config_hash = 0;
    std::vector<uint64_t> style_hashes;
    int64_t steps = 0;
    scalar_t lr = 0.0;
};

void save_finetune_sidecar(const Model& model, const SidecarMeta& meta, const std::string& path);

// Header-only read; used to check provenance without touching the model.
SidecarMeta read_sidecar_meta(const std::string& path);

// Allocates residuals if needed and fills them from the sidecar. Unknown
// tensor names raise KeyError; config-hash or shape skew raises LoadError.
SidecarMeta apply_finetune_sidecar(Model& model, const std::string& path);

}  // namespace artadapter
