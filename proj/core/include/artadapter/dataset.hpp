#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "artadapter/tensor.hpp"

namespace artadapter {

struct DatasetRecord {
    std::string path;     // resolved image path
    std::string caption;  // never empty (falls back to a generic caption)
};

// Parses a tab-separated manifest of `image_path<TAB>caption` lines.
// Relative image paths resolve against the manifest's directory. Every
// problem (missing tab, unreadable file, empty manifest) is a ConfigError
// raised here, before any training step runs.
std::vector<DatasetRecord> load_manifest(const std::string& path);

// Record list with lazily decoded, cached image tensors.
class Dataset {
  public:
    explicit Dataset(std::vector<DatasetRecord> records);
    static Dataset from_manifest(const std::string& path) {
        return Dataset(load_manifest(path));
    }

    int64_t size() const { return static_cast<int64_t>(records_.size()); }
    const DatasetRecord& record(int64_t i) const;
    const Tensor& image01(int64_t i) const;  // (3, H, W) in [0, 1]

  private:
    std::vector<DatasetRecord> records_;
    mutable std::vector<Tensor> cache_;
};

}  // namespace artadapter
