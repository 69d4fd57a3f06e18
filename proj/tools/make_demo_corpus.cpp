// Writes the deterministic two-part practice pieces used by the tests and
// the README walkthrough as .mid files.

#include <CLI11.hpp>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "duet/synth.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate a small deterministic two-part MIDI corpus"};
  std::string out_dir;
  duet::SynthOptions options;
  app.add_option("--out", out_dir, "output directory")->required();
  app.add_option("--pieces", options.pieces, "number of pieces");
  app.add_option("--bars", options.bars, "bars per piece");
  app.add_option("--seed", options.seed, "generator seed");
  CLI11_PARSE(app, argc, argv);

  std::filesystem::create_directories(out_dir);
  for (const auto& [name, bytes] : duet::make_demo_corpus(options)) {
    auto path = std::filesystem::path(out_dir) / name;
    std::ofstream out(path, std::ios::binary);
    if (!out) {
      std::cerr << "cannot write " << path << "\n";
      return 1;
    }
    out.write(reinterpret_cast<const char*>(bytes.data()),
              static_cast<std::streamsize>(bytes.size()));
    std::cout << path.string() << "\n";
  }
  return 0;
}
