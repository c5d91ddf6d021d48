// Writes the bundled synthetic piano-roll dataset to a JSON file.

#include <iostream>
#include <string>

#include "CLI11.hpp"
#include "fdrnn/surrogate.hpp"

int main(int argc, char** argv) {
  CLI::App app{"generate the synthetic piano-roll dataset"};
  std::string out_path;
  long long seed = 1234;
  int n_train = 60, n_valid = 15, n_test = 15;
  app.add_option("--out", out_path, "output JSON path")->required();
  app.add_option("--seed", seed, "generator seed");
  app.add_option("--train", n_train, "training sequences");
  app.add_option("--valid", n_valid, "validation sequences");
  app.add_option("--test", n_test, "test sequences");
  CLI11_PARSE(app, argc, argv);

  try {
    const auto ds = fdrnn::make_surrogate_dataset(
        static_cast<std::uint64_t>(seed), n_train, n_valid, n_test);
    fdrnn::save_dataset(ds, out_path);
    std::cout << ds.name << " -> " << out_path << "\n";
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
