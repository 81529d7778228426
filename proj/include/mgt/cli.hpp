#pragma once

#include <cstddef>
#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "mgt/config.hpp"
#include "mgt/grad_check.hpp"

namespace mgt {

struct GradGroup {
  std::string name;
  GradCheckReport report;
};

// Central-difference checks over sphere mapping, MRC, geodesic attention, one
// encoder layer and a toy end-to-end loss. `e2e_elements` bounds the entries
// probed per tensor of the end-to-end model; the smaller groups check every entry.
std::vector<GradGroup> gradcheck_suite(double step, std::size_t e2e_elements, std::uint64_t seed);

// Every run key with its default value.
KeyValues default_run_config();

// `mgt <command> [--config FILE] [--key value ...]`. Returns the process exit code:
// 0 success, 1 failed check or numeric failure, 2 usage or configuration error.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mgt
