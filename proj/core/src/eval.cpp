#include "artadapter/eval.hpp"

#include <array>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "artadapter/image.hpp"
#include "artadapter/rng.hpp"

namespace artadapter {

namespace fs = std::filesystem;
using ordered_json = nlohmann::ordered_json;

Tensor style_stat_vector(const StyleEncoder& enc, const Tensor& img01) {
    const std::array<Tensor, 3> levels = enc.level_statistics(img01);
    int64_t total = 0;
    for (const Tensor& l : levels) total += l.numel();
    Tensor out({total});
    int64_t off = 0;
    for (const Tensor& l : levels) {
        for (int64_t i = 0; i < l.numel(); ++i) out.at(off + i) = l.at(i);
        off += l.numel();
    }
    return out;
}

scalar_t stat_similarity(const Tensor& a, const Tensor& b) {
    if (!a.same_shape(b))
        throw ShapeError("stat_similarity: shape mismatch " + a.shape_str() + " vs " +
                         b.shape_str());
    scalar_t sq = 0.0;
    for (int64_t i = 0; i < a.numel(); ++i) {
        const scalar_t d = a.at(i) - b.at(i);
        sq += d * d;
    }
    return 1.0 / (1.0 + std::sqrt(sq));
}

std::vector<Tensor> standardize_stat_batch(const std::vector<Tensor>& vectors) {
    if (vectors.empty()) return {};
    const int64_t dim = vectors.front().numel();
    for (const Tensor& v : vectors)
        if (v.numel() != dim) throw ShapeError("standardize_stat_batch: ragged batch");
    const scalar_t n = static_cast<scalar_t>(vectors.size());

    std::vector<scalar_t> mean(static_cast<size_t>(dim), 0.0);
    std::vector<scalar_t> sd(static_cast<size_t>(dim), 0.0);
    for (const Tensor& v : vectors)
        for (int64_t i = 0; i < dim; ++i) mean[static_cast<size_t>(i)] += v.at(i);
    for (int64_t i = 0; i < dim; ++i) mean[static_cast<size_t>(i)] /= n;
    for (const Tensor& v : vectors)
        for (int64_t i = 0; i < dim; ++i) {
            const scalar_t d = v.at(i) - mean[static_cast<size_t>(i)];
            sd[static_cast<size_t>(i)] += d * d;
        }
    for (int64_t i = 0; i < dim; ++i)
        sd[static_cast<size_t>(i)] = std::max(std::sqrt(sd[static_cast<size_t>(i)] / n), 1e-12);

    std::vector<Tensor> out;
    out.reserve(vectors.size());
    for (const Tensor& v : vectors) {
        Tensor s({dim});
        for (int64_t i = 0; i < dim; ++i)
            s.at(i) = (v.at(i) - mean[static_cast<size_t>(i)]) / sd[static_cast<size_t>(i)];
        out.push_back(std::move(s));
    }
    return out;
}

TestsetSpec load_testset(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open testset: " + path);
    ordered_json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("testset parse error: " + std::string(e.what()));
    }
    if (!j.is_object() || !j.contains("prompts") || !j.contains("styles"))
        throw ConfigError("testset must be an object with 'prompts' and 'styles'");
    for (const auto& item : j.items())
        if (item.key() != "prompts" && item.key() != "styles")
            throw ConfigError("unknown key '" + item.key() + "' in testset");

    TestsetSpec spec;
    const fs::path base = fs::path(path).parent_path();
    for (const auto& p : j.at("prompts")) spec.prompts.push_back(p.get<std::string>());
    for (const auto& s : j.at("styles")) {
        fs::path sp(s.get<std::string>());
        if (sp.is_relative()) sp = base / sp;
        spec.styles.push_back(sp.string());
    }
    if (spec.prompts.empty()) throw ConfigError("testset has no prompts");
    if (spec.styles.empty()) throw ConfigError("testset has no styles");
    return spec;
}

namespace {

std::string shell_quote(const std::string& s) {
    std::string out = "'";
    for (char c : s) {
        if (c == '\'')
            out += "'\\''";
        else
            out += c;
    }
    out += "'";
    return out;
}

// Runs `cmd image_path prompt`; a clean exit with one parseable float on
// stdout yields a score, anything else yields absence.
std::optional<scalar_t> run_embedder(const std::string& cmd, const std::string& image_path,
                                     const std::string& prompt) {
    const std::string full = cmd + " " + shell_quote(image_path) + " " + shell_quote(prompt);
    FILE* pipe = popen(full.c_str(), "r");
    if (!pipe) return std::nullopt;
    std::string output;
    char buf[256];
    while (fgets(buf, sizeof(buf), pipe)) output += buf;
    const int status = pclose(pipe);
    if (status != 0) return std::nullopt;
    try {
        size_t pos = 0;
        const scalar_t v = std::stod(output, &pos);
        if (!std::isfinite(v)) return std::nullopt;
        return v;
    } catch (const std::exception&) {
        return std::nullopt;
    }
}

}  // namespace

EvalReport evaluate_testset(Model& model, const TestsetSpec& spec, const SampleOptions& base_opts,
                            const std::string& embedder_cmd, const std::string& out_dir) {
    if (!model.built()) throw StateError("evaluate_testset: model not built");
    if (spec.prompts.empty() || spec.styles.empty())
        throw ArgumentError("evaluate_testset: empty testset");
    fs::create_directories(out_dir);

    // Each style reference is read and embedded into stat space once.
    std::vector<Tensor> style_images;
    std::vector<Tensor> ref_vectors;
    for (const std::string& path : spec.styles) {
        Tensor img = image_to_tensor01(read_image(path));
        ref_vectors.push_back(style_stat_vector(model.style(), img));
        style_images.push_back(std::move(img));
    }

    const Rng root(base_opts.seed);
    const int64_t np = static_cast<int64_t>(spec.prompts.size());
    const int64_t ns = static_cast<int64_t>(spec.styles.size());

    EvalReport report;
    std::vector<Tensor> gen_vectors;
    std::vector<std::string> gen_paths;
    for (int64_t pi = 0; pi < np; ++pi) {
        for (int64_t si = 0; si < ns; ++si) {
            SampleOptions opts = base_opts;
            opts.seed = root.derive(static_cast<uint64_t>(pi), static_cast<uint64_t>(si)).next_u64();

            GenerateResult gr =
                generate(model, spec.prompts[static_cast<size_t>(pi)],
                         {style_images[static_cast<size_t>(si)]}, opts);
            std::ostringstream name;
            name << "pair_" << pi << "_" << si << ".png";
            const std::string out_path = (fs::path(out_dir) / name.str()).string();
            write_generated_png(out_path, gr);

            EvalRow row;
            row.prompt = spec.prompts[static_cast<size_t>(pi)];
            row.style_ref = spec.styles[static_cast<size_t>(si)];
            row.seed = opts.seed;
            report.rows.push_back(std::move(row));
            gen_vectors.push_back(style_stat_vector(model.style(), gr.image01));
            gen_paths.push_back(out_path);
        }
    }

    // Standardization needs more than one generated image to be meaningful;
    // a single row falls back to raw distances.
    report.standardized = report.rows.size() > 1;
    std::vector<Tensor> gen_std = gen_vectors;
    std::vector<Tensor> ref_std = ref_vectors;
    if (report.standardized) {
        std::vector<Tensor> batch = gen_vectors;
        batch.insert(batch.end(), ref_vectors.begin(), ref_vectors.end());
        std::vector<Tensor> std_batch = standardize_stat_batch(batch);
        for (size_t i = 0; i < gen_vectors.size(); ++i) gen_std[i] = std_batch[i];
        for (size_t i = 0; i < ref_vectors.size(); ++i)
            ref_std[i] = std_batch[gen_vectors.size() + i];
    }

    scalar_t style_sum = 0.0;
    scalar_t text_sum = 0.0;
    int64_t text_count = 0;
    for (size_t r = 0; r < report.rows.size(); ++r) {
        const size_t si = r % static_cast<size_t>(ns);
        report.rows[r].style_score = stat_similarity(gen_std[r], ref_std[si]);
        style_sum += report.rows[r].style_score;
        if (!embedder_cmd.empty()) {
            report.rows[r].text_score =
                run_embedder(embedder_cmd, gen_paths[r], report.rows[r].prompt);
            if (report.rows[r].text_score) {
                text_sum += *report.rows[r].text_score;
                ++text_count;
            }
        }
    }

    report.count = static_cast<int64_t>(report.rows.size());
    report.mean_style = style_sum / static_cast<scalar_t>(report.count);
    if (text_count > 0) report.mean_text = text_sum / static_cast<scalar_t>(text_count);
    return report;
}

std::string eval_report_to_json(const EvalReport& report) {
    ordered_json rows = ordered_json::array();
    for (const EvalRow& r : report.rows) {
        ordered_json row;
        row["prompt"] = r.prompt;
        row["style_ref"] = r.style_ref;
        row["seed"] = r.seed;
        row["style_score"] = r.style_score;
        if (r.text_score) row["text_score"] = *r.text_score;
        rows.push_back(std::move(row));
    }
    ordered_json j;
    j["rows"] = std::move(rows);
    ordered_json agg;
    agg["mean_style"] = report.mean_style;
    if (report.mean_text) agg["mean_text"] = *report.mean_text;
    agg["count"] = report.count;
    j["aggregates"] = std::move(agg);
    j["standardized"] = report.standardized;
    return j.dump(2) + "\n";
}

void write_eval_report(const std::string& path, const EvalReport& report) {
    std::ofstream out(path);
    if (!out) throw IoError("cannot write eval report: " + path);
    out << eval_report_to_json(report);
}

}  // namespace artadapter
