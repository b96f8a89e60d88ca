#pragma once

#include "geovar/io.hpp"

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

namespace geovar {

enum ExitCode : int { kExitOk = 0, kExitConfig = 2, kExitNumerical = 3, kExitNotAdmissible = 4 };

struct GlobalOptions {
  std::string config;
  std::string out = "geovar_out";
  std::optional<double> tol;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  bool require_admissible = false;
};

// Exit code for an exception escaping a command.
int exit_code_for(const std::exception& e);

// Each command reads its config, writes its files under opts.out and returns
// an exit code. Errors propagate as exceptions.
int cmd_geodesic(const Json& config, const GlobalOptions& opts, std::ostream& log);
int cmd_conjugate(const Json& config, const GlobalOptions& opts, std::ostream& log);
int cmd_bvp(const Json& config, const GlobalOptions& opts, std::ostream& log);
int cmd_classify(const Json& config, const GlobalOptions& opts, std::ostream& log);
int cmd_census(const Json& config, const GlobalOptions& opts, std::ostream& log);
int cmd_perturb(const Json& config, const GlobalOptions& opts, std::ostream& log);

struct ObstructArgs {
  std::optional<int> sphere;
  std::optional<std::string> surface;
  std::optional<std::string> generic;  // "compact=true,orientable=true,dim=4,chi=0"
  int index = 1;
};
Json obstruct_report(const ObstructArgs& args);
int cmd_obstruct(const ObstructArgs& args, const GlobalOptions& opts, std::ostream& log);

// Full command line, argv[0] included. Messages go to out and err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace geovar
