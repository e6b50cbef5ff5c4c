// One line per acceptance criterion; exit status 1 if any fails.
#include <iostream>
#include <vector>

#include "CLI11.hpp"
#include "branchlim/acceptance.hpp"

int main(int argc, char** argv) {
  CLI::App app{"branchlim acceptance criteria"};
  std::vector<int> ids;
  branchlim::acceptance::Options opt;
  app.add_option("criteria", ids, "Criterion ids (default: all)")->check(CLI::Range(1, branchlim::acceptance::kCriteria));
  app.add_option("--seed", opt.seed, "Seed");
  app.add_option("--workers", opt.workers, "Worker threads")->check(CLI::PositiveNumber);
  app.add_option("--scale", opt.scale, "Monte Carlo sample-size multiplier")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  if (ids.empty())
    for (int i = 1; i <= branchlim::acceptance::kCriteria; ++i) ids.push_back(i);

  bool all = true;
  for (int id : ids) {
    const auto r = branchlim::acceptance::run(id, opt);
    std::cout << r.summary_line() << std::endl;
    all = all && r.pass;
  }
  return all ? 0 : 1;
}
