#pragma once

#include <string>

#include "clhpo/hpo.hpp"

namespace clhpo {

// Versioned run-record file ("clhpo-run-v1"). Doubles are serialized as hex
// floats, so load_run(persist_run(r)) reproduces r bit-exactly.
void persist_run(const hpo::RunRecord& record, const std::string& path);
hpo::RunRecord load_run(const std::string& path);

}  // namespace clhpo
