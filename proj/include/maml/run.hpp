#pragma once

#include <iosfwd>
#include <optional>

#include "maml/config.hpp"
#include "maml/data.hpp"
#include "maml/eval.hpp"
#include "maml/model.hpp"

namespace maml {

struct PreparedData {
  InteractionDataset filtered;
  SplitPair split;
  FeatureStore features;
  // Validation positives aligned to the filtered id space, when configured.
  std::optional<InteractionDataset> valid;
};

// load -> k-core -> per-user split -> features. The split consumes `rng`.
PreparedData prepare_data(const RunConfig& cfg, Rng& rng);

// Each command returns a process exit code; library errors propagate as
// exceptions and are reported by the CLI front end.
int cmd_train(const RunConfig& cfg, std::ostream& out);
int cmd_evaluate(const RunConfig& cfg, std::ostream& out);
int cmd_synthetic(const RunConfig& cfg, std::ostream& out);
int cmd_inspect(const RunConfig& cfg, std::ostream& out);

}  // namespace maml
