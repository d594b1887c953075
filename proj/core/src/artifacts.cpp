#include "svac/artifacts.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "svac/errors.hpp"

namespace svac {

using nlohmann::ordered_json;

std::string sha256_hex(const std::string& bytes) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int len = 0;
    EVP_Digest(bytes.data(), bytes.size(), digest, &len, EVP_sha256(), nullptr);
    std::string hex;
    hex.reserve(len * 2);
    for (unsigned int i = 0; i < len; ++i) {
        char buf[3];
        std::snprintf(buf, sizeof(buf), "%02x", digest[i]);
        hex += buf;
    }
    return hex;
}

std::string sha256_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw AssetError("cannot open file for hashing: " + path);
    std::ostringstream buf;
    buf << in.rdbuf();
    return sha256_hex(buf.str());
}

namespace {

ordered_json factors_to_json(const PromptFactors& f) {
    return {{"is_plural", f.is_plural},
            {"is_negated", f.is_negated},
            {"has_prefix", f.has_prefix},
            {"is_pronoun", f.is_pronoun},
            {"tense", f.tense == Tense::past ? "past" : "present"},
            {"use_irregular", f.use_irregular}};
}

PromptFactors factors_from_json(const ordered_json& j) {
    PromptFactors f;
    f.is_plural = j.at("is_plural").get<bool>();
    f.is_negated = j.at("is_negated").get<bool>();
    f.has_prefix = j.at("has_prefix").get<bool>();
    f.is_pronoun = j.at("is_pronoun").get<bool>();
    f.tense = j.at("tense").get<std::string>() == "past" ? Tense::past : Tense::present;
    f.use_irregular = j.at("use_irregular").get<bool>();
    return f;
}

ordered_json report_row(const EvalReport& r) {
    return {{"accuracy", r.accuracy},       {"precision", r.precision},
            {"recall", r.recall},           {"f1", r.f1},
            {"mean_logit_diff", r.mean_logit_diff},
            {"std_logit_diff", r.std_logit_diff},
            {"count", r.count}};
}

} // namespace

std::string dataset_to_jsonl(const Dataset& ds) {
    std::ostringstream out;
    for (const auto& p : ds.instances) {
        ordered_json j;
        j["factors"] = factors_to_json(p.factors);
        j["text"] = p.text;
        j["correct"] = p.correct;
        j["incorrect"] = p.incorrect;
        j["seed"] = ds.seed;
        j["setting"] = setting_name(ds.setting);
        j["lexicon_choices"] = {{"name1", p.lexicon_choices.name1},
                                {"name2", p.lexicon_choices.name2},
                                {"verb", p.lexicon_choices.verb},
                                {"prefix", p.lexicon_choices.prefix}};
        out << j.dump() << "\n";
    }
    return out.str();
}

Dataset dataset_from_jsonl(const std::string& text) {
    Dataset ds;
    std::istringstream in(text);
    std::string line;
    bool first = true;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        ordered_json j;
        try {
            j = ordered_json::parse(line);
        } catch (const ordered_json::parse_error& e) {
            throw AssetError("dataset line is not valid JSON: " + std::string(e.what()));
        }
        PromptInstance p;
        p.factors = factors_from_json(j.at("factors"));
        p.text = j.at("text").get<std::string>();
        p.correct = j.at("correct").get<std::string>();
        p.incorrect = j.at("incorrect").get<std::string>();
        p.rng_seed = j.at("seed").get<std::uint64_t>();
        const auto& c = j.at("lexicon_choices");
        p.lexicon_choices = {c.at("name1").get<std::size_t>(), c.at("name2").get<std::size_t>(),
                             c.at("verb").get<std::size_t>(), c.at("prefix").get<std::size_t>()};
        if (first) {
            ds.seed = p.rng_seed;
            ds.setting = setting_from_name(j.at("setting").get<std::string>());
            first = false;
        }
        ds.instances.push_back(std::move(p));
    }
    return ds;
}

std::string report_to_json(const EvalReport& summary,
                           const std::map<std::string, EvalReport>& per_cell) {
    ordered_json j;
    j["summary"] = report_row(summary);
    if (!summary.group_key.empty()) j["summary"]["group"] = summary.group_key;
    j["per_cell"] = ordered_json::array();
    for (const auto& [key, r] : per_cell) {
        ordered_json row = report_row(r);
        row["group"] = key;
        j["per_cell"].push_back(std::move(row));
    }
    return j.dump(2) + "\n";
}

std::string effect_matrix_to_json(const HeadEffectMatrix& m) {
    ordered_json j;
    j["flip_factor"] = factor_name(m.flip_factor);
    j["n_prompts"] = m.n_prompts;
    j["n_used"] = m.n_used;
    j["n_aligned_final"] = m.n_aligned_final;
    j["n_skipped"] = m.n_skipped;
    j["skip_reasons"] = m.skip_reasons;
    auto grid = [](const Matrix& mat) {
        ordered_json rows = ordered_json::array();
        for (std::size_t l = 0; l < mat.rows; ++l) {
            ordered_json row = ordered_json::array();
            for (std::size_t h = 0; h < mat.cols; ++h) row.push_back(mat.at(l, h));
            rows.push_back(std::move(row));
        }
        return rows;
    };
    j["signed_mean"] = grid(m.signed_mean);
    j["abs_mean"] = grid(m.abs_mean);
    return j.dump(2) + "\n";
}

std::string effect_matrix_to_tsv(const HeadEffectMatrix& m) {
    std::ostringstream out;
    out << "layer";
    for (std::size_t h = 0; h < m.abs_mean.cols; ++h) out << "\thead" << h;
    out << "\n";
    for (std::size_t l = 0; l < m.abs_mean.rows; ++l) {
        out << l;
        for (std::size_t h = 0; h < m.abs_mean.cols; ++h) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6g", m.abs_mean.at(l, h));
            out << "\t" << buf;
        }
        out << "\n";
    }
    return out.str();
}

std::string attention_pattern_to_tsv(const AttentionPattern& p) {
    std::ostringstream out;
    out << "query\\key";
    for (const auto& t : p.tokens) out << "\t" << t;
    out << "\n";
    for (std::size_t i = 0; i < p.matrix.rows; ++i) {
        out << p.tokens[i];
        for (std::size_t j = 0; j < p.matrix.cols; ++j) {
            char buf[32];
            std::snprintf(buf, sizeof(buf), "%.6g", p.matrix.at(i, j));
            out << "\t" << buf;
        }
        out << "\n";
    }
    return out.str();
}

std::string attention_pattern_to_pgm(const AttentionPattern& p) {
    std::ostringstream out;
    out << "P5\n" << p.matrix.cols << " " << p.matrix.rows << "\n255\n";
    for (std::size_t i = 0; i < p.matrix.rows; ++i)
        for (std::size_t j = 0; j < p.matrix.cols; ++j) {
            const float v = p.matrix.at(i, j);
            const int px = static_cast<int>(v * 255.0f + 0.5f);
            out.put(static_cast<char>(px < 0 ? 0 : (px > 255 ? 255 : px)));
        }
    return out.str();
}

std::string dla_report_to_json(const DlaReport& r) {
    ordered_json j;
    j["prompt"] = r.prompt_text;
    j["total_logit_diff"] = r.total;
    j["embedding"] = r.embedding;
    j["pooled_residual"] = r.pooled_residual;
    j["frozen_ln_scale"] = r.frozen_ln_scale;
    ordered_json rows = ordered_json::array();
    for (std::size_t l = 0; l < r.head_contributions.rows; ++l) {
        ordered_json row = ordered_json::array();
        for (std::size_t h = 0; h < r.head_contributions.cols; ++h)
            row.push_back(r.head_contributions.at(l, h));
        rows.push_back(std::move(row));
    }
    j["head_contributions"] = std::move(rows);
    return j.dump(2) + "\n";
}

RunDirectory::RunDirectory(std::string root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_, ec);
    if (ec) throw AssetError("cannot create run directory: " + root_ + ": " + ec.message());
}

void RunDirectory::write(const std::string& name, const std::string& contents) {
    const std::filesystem::path path = std::filesystem::path(root_) / name;
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw AssetError("cannot write artifact: " + path.string());
    out << contents;
    files_.emplace_back(name, sha256_hex(contents));
}

void RunDirectory::write_manifest(const std::string& config_snapshot_json) {
    ordered_json j;
    j["config"] = ordered_json::parse(config_snapshot_json);
    j["artifacts"] = ordered_json::array();
    for (const auto& [name, hash] : files_)
        j["artifacts"].push_back({{"file", name}, {"sha256", hash}});
    const std::string text = j.dump(2) + "\n";
    std::ofstream out(std::filesystem::path(root_) / "manifest.json", std::ios::binary);
    if (!out) throw AssetError("cannot write manifest in " + root_);
    out << text;
}

} // namespace svac
