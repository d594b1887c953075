#pragma once

#include <map>
#include <string>
#include <vector>

#include "svac/analysis.hpp"
#include "svac/circuits.hpp"
#include "svac/eval.hpp"
#include "svac/patching.hpp"
#include "svac/prompts.hpp"

namespace svac {

std::string sha256_hex(const std::string& bytes);
std::string sha256_file(const std::string& path);

// All artifact writers produce byte-stable output for identical inputs.
std::string dataset_to_jsonl(const Dataset& ds);
Dataset dataset_from_jsonl(const std::string& text);

std::string report_to_json(const EvalReport& summary,
                           const std::map<std::string, EvalReport>& per_cell);

std::string effect_matrix_to_json(const HeadEffectMatrix& m);
std::string effect_matrix_to_tsv(const HeadEffectMatrix& m); // abs-mean grid

std::string attention_pattern_to_tsv(const AttentionPattern& p);
// 8-bit grayscale PGM, one pixel per attention cell, row-normalized scale.
std::string attention_pattern_to_pgm(const AttentionPattern& p);

std::string dla_report_to_json(const DlaReport& r);

// Collects artifact files under a run directory and writes manifest.json
// listing every file with its content hash.
class RunDirectory {
  public:
    explicit RunDirectory(std::string root);
    const std::string& root() const { return root_; }
    void write(const std::string& name, const std::string& contents);
    void write_manifest(const std::string& config_snapshot_json);

  private:
    std::string root_;
    std::vector<std::pair<std::string, std::string>> files_; // name -> sha256
};

} // namespace svac
