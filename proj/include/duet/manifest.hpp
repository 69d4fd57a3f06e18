#pragma once

#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "duet/errors.hpp"
#include "duet/tokenizer.hpp"

namespace duet {

struct ManifestRow {
  std::string piece_id;
  std::string pair_id;
  int segment_index = 0;
  int transposition = 0;
  std::string split;  // "train" or "validation"
  std::string source_token_file;  // relative to the manifest's directory
  std::string target_token_file;

  bool operator==(const ManifestRow&) const = default;
};

inline const char* kManifestHeader =
    "piece_id\tpair_id\tsegment_index\ttransposition\tsplit\t"
    "source_token_file\ttarget_token_file";

inline void write_manifest(const std::filesystem::path& path,
                           const std::vector<ManifestRow>& rows) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write manifest '" + path.string() + "'");
  out << kManifestHeader << "\n";
  for (const auto& r : rows) {
    out << r.piece_id << '\t' << r.pair_id << '\t' << r.segment_index << '\t'
        << r.transposition << '\t' << r.split << '\t' << r.source_token_file
        << '\t' << r.target_token_file << "\n";
  }
}

inline std::vector<ManifestRow> read_manifest(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open manifest '" + path.string() + "'");
  std::vector<ManifestRow> rows;
  std::string line;
  bool first = true;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    if (first) {
      first = false;
      if (line != kManifestHeader)
        throw AlignmentError("manifest header mismatch in '" + path.string() +
                             "'");
      continue;
    }
    std::vector<std::string> cols;
    std::istringstream ls(line);
    std::string col;
    while (std::getline(ls, col, '\t')) cols.push_back(col);
    if (cols.size() != 7)
      throw AlignmentError("manifest row " + std::to_string(lineno) +
                           " has " + std::to_string(cols.size()) +
                           " columns, expected 7");
    ManifestRow r;
    r.piece_id = cols[0];
    r.pair_id = cols[1];
    r.segment_index = std::stoi(cols[2]);
    r.transposition = std::stoi(cols[3]);
    r.split = cols[4];
    r.source_token_file = cols[5];
    r.target_token_file = cols[6];
    rows.push_back(std::move(r));
  }
  return rows;
}

/// One segment per line, words separated by single spaces.
inline void write_token_file(const std::filesystem::path& path,
                             const std::vector<std::vector<std::string>>& lines) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write token file '" + path.string() + "'");
  for (const auto& words : lines) {
    for (std::size_t i = 0; i < words.size(); ++i) {
      if (i) out << ' ';
      out << words[i];
    }
    out << '\n';
  }
}

inline std::vector<std::vector<std::string>> read_token_file(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open token file '" + path.string() + "'");
  std::vector<std::vector<std::string>> lines;
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> words;
    std::istringstream ls(line);
    std::string word;
    while (ls >> word) words.push_back(word);
    if (!words.empty()) lines.push_back(std::move(words));
  }
  return lines;
}

/// Vocabulary file: one word per line, line number = id.
inline void save_vocabulary(const std::filesystem::path& path,
                            const Vocabulary& vocab) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot write vocabulary '" + path.string() + "'");
  for (const auto& w : vocab.words()) out << w << "\n";
}

inline Vocabulary load_vocabulary(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open vocabulary '" + path.string() + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line))
    if (!line.empty()) lines.push_back(line);
  return Vocabulary::from_lines(lines);
}

}  // namespace duet
