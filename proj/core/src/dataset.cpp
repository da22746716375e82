#include "artadapter/dataset.hpp"

#include <filesystem>
#include <fstream>

#include "artadapter/common.hpp"
#include "artadapter/image.hpp"

namespace artadapter {

std::vector<DatasetRecord> load_manifest(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open manifest: " + path);
    const std::filesystem::path base = std::filesystem::path(path).parent_path();

    std::vector<DatasetRecord> records;
    std::string line;
    int64_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        const size_t tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ConfigError("manifest line " + std::to_string(line_no) +
                              " is not image_path<TAB>caption");
        DatasetRecord rec;
        std::filesystem::path img(line.substr(0, tab));
        if (img.is_relative()) img = base / img;
        rec.path = img.string();
        rec.caption = line.substr(tab + 1);
        if (rec.caption.empty()) rec.caption = "an image";
        std::error_code ec;
        if (!std::filesystem::is_regular_file(rec.path, ec))
            throw ConfigError("manifest line " + std::to_string(line_no) +
                              ": image not found: " + rec.path);
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw ConfigError("manifest has no records: " + path);
    return records;
}

Dataset::Dataset(std::vector<DatasetRecord> records) : records_(std::move(records)) {
    if (records_.empty()) throw ConfigError("dataset must contain at least one record");
    cache_.resize(records_.size());
}

const DatasetRecord& Dataset::record(int64_t i) const {
    if (i < 0 || i >= size()) throw RangeError("dataset index out of range");
    return records_[static_cast<size_t>(i)];
}

const Tensor& Dataset::image01(int64_t i) const {
    if (i < 0 || i >= size()) throw RangeError("dataset index out of range");
    Tensor& slot = cache_[static_cast<size_t>(i)];
    if (slot.empty()) slot = image_to_tensor01(read_image(records_[static_cast<size_t>(i)].path));
    return slot;
}

}  // namespace artadapter
