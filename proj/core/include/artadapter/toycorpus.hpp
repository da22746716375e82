#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace artadapter {

// Synthesized captioned corpus: 8 visually distinct style families (palette +
// texture) crossed with simple shape foregrounds. Captions name only shape
// counts and kinds, never colors, so style information reaches the model
// solely through the style pathway.
struct ToyCorpusSpec {
    std::string out_dir;
    int64_t train_count = 240;
    int64_t holdout_count = 40;
    int64_t image_size = 64;
    uint64_t seed = 7;
};

struct ToyCorpusResult {
    std::string train_manifest;    // TSV of image_path<TAB>caption
    std::string holdout_manifest;  // same format
    std::string styles_json;       // family -> {train: [...], holdout: [...]}
};

ToyCorpusResult generate_toy_corpus(const ToyCorpusSpec& spec);

const std::vector<std::string>& toy_style_families();

}  // namespace artadapter
