// Writes a synthetic grounded corpus: captions.txt, features.vgnf and the
// planted phrase spans (phrases.txt, "begin end" pairs per caption line).

#include <fstream>
#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "vgnsl/synthetic.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Generate a synthetic captions/features pair"};
  vgnsl::SyntheticConfig cfg;
  std::string out_dir = ".";
  app.add_option("--captions", cfg.captions)->capture_default_str();
  app.add_option("--image-dim", cfg.image_dim)->capture_default_str();
  app.add_option("--noise", cfg.noise)->capture_default_str();
  app.add_option("--seed", cfg.seed)->capture_default_str();
  app.add_option("--out-dir", out_dir)->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  try {
    const auto data = vgnsl::make_synthetic_corpus(cfg);
    std::ofstream caps(out_dir + "/captions.txt"), phrases(out_dir + "/phrases.txt");
    if (!caps || !phrases) throw vgnsl::IoError("cannot write into '" + out_dir + "'");
    for (std::size_t i = 0; i < data.tokens.size(); ++i) {
      for (std::size_t j = 0; j < data.tokens[i].size(); ++j) caps << (j ? " " : "") << data.tokens[i][j];
      caps << '\n';
      for (std::size_t j = 0; j < data.planted[i].size(); ++j)
        phrases << (j ? " " : "") << data.planted[i][j].begin << ' ' << data.planted[i][j].end;
      phrases << '\n';
    }
    vgnsl::write_features(out_dir + "/features.vgnf", data.corpus.features);
  } catch (const vgnsl::Error& e) {
    std::cerr << "make_synthetic: error: " << e.kind() << ": " << e.what() << '\n';
    return e.kind() == std::string("io") ? 2 : 1;
  }
  return 0;
}
