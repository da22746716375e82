#include "artadapter/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <set>

#include <nlohmann/json.hpp>

#include "artadapter/hash.hpp"

namespace artadapter {

namespace {

using json = nlohmann::ordered_json;

constexpr uint32_t kCheckpointVersion = 1;
constexpr char kCheckpointMagic[4] = {'A', 'A', 'C', 'K'};
constexpr char kSidecarMagic[4] = {'A', 'A', 'S', 'C'};

// Hashed binary blob: magic, version, header JSON, payload, FNV-1a trailer.
class BlobWriter {
  public:
    BlobWriter(const std::string& path, const char magic[4], const std::string& header)
        : out_(path, std::ios::binary), path_(path) {
        if (!out_) throw IoError("cannot write " + path);
        write(magic, 4);
        const uint32_t version = kCheckpointVersion;
        write(&version, sizeof version);
        const uint64_t hlen = header.size();
        write(&hlen, sizeof hlen);
        write(header.data(), header.size());
    }
    void write_tensor(const Tensor& t) {
        write(t.data(), static_cast<size_t>(t.numel()) * sizeof(scalar_t));
    }
    void finish() {
        const uint64_t digest = hash_.digest();
        out_.write(reinterpret_cast<const char*>(&digest), sizeof digest);
        out_.flush();
        if (!out_) throw IoError("failed writing " + path_);
    }

  private:
    void write(const void* p, size_t n) {
        out_.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
        hash_.update(p, n);
    }
    std::ofstream out_;
    std::string path_;
    Fnv1a64 hash_;
};

class BlobReader {
  public:
    BlobReader(const std::string& path, const char magic[4]) : in_(path, std::ios::binary) {
        if (!in_) throw IoError("cannot open " + path);
        path_ = path;
        char got[4];
        read(got, 4);
        if (std::memcmp(got, magic, 4) != 0)
            throw LoadError("wrong file magic in " + path);
        uint32_t version = 0;
        read(&version, sizeof version);
        if (version != kCheckpointVersion)
            throw LoadError("unsupported container version " + std::to_string(version) + " in " +
                            path);
        uint64_t hlen = 0;
        read(&hlen, sizeof hlen);
        header_.resize(hlen);
        read(header_.data(), hlen);
    }
    const std::string& header() const { return header_; }
    void read_tensor(Tensor& t) {
        read(t.data(), static_cast<size_t>(t.numel()) * sizeof(scalar_t));
    }
    void verify_trailer() {
        const uint64_t expect = hash_.digest();
        uint64_t stored = 0;
        in_.read(reinterpret_cast<char*>(&stored), sizeof stored);
        if (!in_ || stored != expect) throw LoadError("integrity check failed for " + path_);
        // The trailer must end the file.
        in_.peek();
        if (!in_.eof()) throw LoadError("trailing bytes after container in " + path_);
    }

  private:
    void read(void* p, size_t n) {
        in_.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
        if (!in_) throw LoadError("truncated container: " + path_);
        hash_.update(p, n);
    }
    std::ifstream in_;
    std::string path_;
    std::string header_;
    Fnv1a64 hash_;
};

json parse_header(const std::string& text, const std::string& path) {
    try {
        return json::parse(text);
    } catch (const nlohmann::json::exception&) {
        throw LoadError("container header is not valid JSON: " + path);
    }
}

json tensor_index(const ParamStore& ps) {
    json index = json::array();
    for (const auto& e : ps.entries()) {
        json t;
        t["name"] = e.name;
        t["section"] = section_name(e.section);
        t["shape"] = e.var->value.shape();
        index.push_back(std::move(t));
    }
    return index;
}

}  // namespace

void save_checkpoint(const Model& model, int64_t step, uint64_t seed, const std::string& path) {
    if (!model.built()) throw StateError("cannot save an unbuilt model");
    json header;
    header["config"] = nlohmann::ordered_json::parse(diffusion_config_to_json(model.config()));
    header["step"] = step;
    header["seed"] = seed;
    header["config_hash"] = hash_hex(config_hash(model.config()));
    header["vocab"] = model.text().vocab().words();
    json sections;
    for (Section s : all_sections()) sections[section_name(s)] = hash_hex(model.section_hash(s));
    header["sections"] = std::move(sections);
    header["tensors"] = tensor_index(model.params());

    BlobWriter w(path, kCheckpointMagic, header.dump());
    for (const auto& e : model.params().entries()) w.write_tensor(e.var->value);
    w.finish();
}

Checkpoint load_checkpoint(const std::string& path) {
    BlobReader r(path, kCheckpointMagic);
    json header = parse_header(r.header(), path);

    Checkpoint ck;
    try {
        DiffusionConfig cfg = diffusion_config_from_json(header.at("config").dump());
        ck.step = header.at("step").get<int64_t>();
        ck.seed = header.at("seed").get<uint64_t>();
        const std::string stored_cfg_hash = header.at("config_hash").get<std::string>();
        if (stored_cfg_hash != hash_hex(config_hash(cfg)))
            throw LoadError("config hash mismatch in " + path);

        ck.model.build(cfg, ck.seed);
        ck.model.text().set_vocab(
            Vocab::from_words(header.at("vocab").get<std::vector<std::string>>()));

        // Allocate residual slots first when the archive carries them, so the
        // index walk below can fill every named tensor.
        for (const auto& t : header.at("tensors"))
            if (t.at("section").get<std::string>() == section_name(Section::FinetuneResidual)) {
                ck.model.allocate_finetune_residuals();
                break;
            }

        const auto& entries = ck.model.params().entries();
        const json& index = header.at("tensors");
        if (index.size() != entries.size())
            throw LoadError("tensor count mismatch in " + path);
        for (size_t i = 0; i < entries.size(); ++i) {
            const json& t = index[i];
            if (t.at("name").get<std::string>() != entries[i].name)
                throw LoadError("tensor name mismatch at index " + std::to_string(i) + " in " +
                                path);
            if (t.at("shape").get<std::vector<int64_t>>() != entries[i].var->value.shape())
                throw LoadError("tensor shape mismatch for " + entries[i].name + " in " + path);
            r.read_tensor(entries[i].var->value);
        }
        r.verify_trailer();

        for (Section s : all_sections()) {
            const std::string want =
                header.at("sections").at(section_name(s)).get<std::string>();
            if (want != hash_hex(ck.model.section_hash(s)))
                throw LoadError(std::string("section hash mismatch for ") + section_name(s) +
                                " in " + path);
        }
    } catch (const nlohmann::json::exception&) {
        throw LoadError("malformed checkpoint header: " + path);
    } catch (const ConfigError& e) {
        throw LoadError("checkpoint config rejected: " + std::string(e.what()));
    }
    return ck;
}

void save_finetune_sidecar(const Model& model, const SidecarMeta& meta, const std::string& path) {
    if (!model.has_finetune_residuals())
        throw StateError("no finetune residuals to save");
    json header;
    header["config_hash"] = hash_hex(config_hash(model.config()));
    json md;
    json hashes = json::array();
    for (uint64_t h : meta.style_hashes) hashes.push_back(hash_hex(h));
    md["style_hashes"] = std::move(hashes);
    md["steps"] = meta.steps;
    md["lr"] = meta.lr;
    header["metadata"] = std::move(md);

    json index = json::array();
    std::vector<const Tensor*> payload;
    for (const AdaptedProjection* p : model.adapted_projections()) {
        if (!p->delta_h) throw StateError("projection missing its finetune residual");
        json t;
        t["name"] = p->param_prefix() + ".delta_h";
        t["shape"] = p->delta_h->value.shape();
        index.push_back(std::move(t));
        payload.push_back(&p->delta_h->value);
    }
    header["tensors"] = std::move(index);

    BlobWriter w(path, kSidecarMagic, header.dump());
    for (const Tensor* t : payload) w.write_tensor(*t);
    w.finish();
}

namespace {

SidecarMeta meta_from_header(const json& header, const std::string& path) {
    SidecarMeta meta;
    try {
        meta.config_hash =
            std::stoull(header.at("config_hash").get<std::string>(), nullptr, 16);
        for (const auto& h : header.at("metadata").at("style_hashes"))
            meta.style_hashes.push_back(std::stoull(h.get<std::string>(), nullptr, 16));
        meta.steps = header.at("metadata").at("steps").get<int64_t>();
        meta.lr = header.at("metadata").at("lr").get<scalar_t>();
    } catch (const nlohmann::json::exception&) {
        throw LoadError("malformed sidecar header: " + path);
    }
    return meta;
}

}  // namespace

SidecarMeta read_sidecar_meta(const std::string& path) {
    BlobReader r(path, kSidecarMagic);
    return meta_from_header(parse_header(r.header(), path), path);
}

SidecarMeta apply_finetune_sidecar(Model& model, const std::string& path) {
    BlobReader r(path, kSidecarMagic);
    json header = parse_header(r.header(), path);
    SidecarMeta meta = meta_from_header(header, path);
    if (meta.config_hash != config_hash(model.config()))
        throw LoadError("sidecar was produced for a different model config: " + path);

    model.allocate_finetune_residuals();
    std::set<std::string> known;
    for (const AdaptedProjection* p : model.adapted_projections())
        known.insert(p->param_prefix() + ".delta_h");

    try {
        for (const auto& t : header.at("tensors")) {
            const std::string name = t.at("name").get<std::string>();
            if (!known.count(name))
                throw KeyError("sidecar tensor does not match any adapted projection: " + name);
            Var v = model.params().get(name);
            if (t.at("shape").get<std::vector<int64_t>>() != v->value.shape())
                throw LoadError("sidecar shape mismatch for " + name);
            r.read_tensor(v->value);
        }
    } catch (const nlohmann::json::exception&) {
        throw LoadError("malformed sidecar header: " + path);
    }
    r.verify_trailer();
    return meta;
}

}  // namespace artadapter
