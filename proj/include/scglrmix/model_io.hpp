#pragma once

#include "scglrmix/model.hpp"

#include <string>
#include <variant>

namespace scglrmix {

using AnyModel = std::variant<ComponentModel, MixedComponentModel>;

/// Model file: JSON tagged "scglr-mix/1". Doubles are written in shortest
/// round-trip form, so reading back is exact and output is deterministic.
std::string model_to_json(const ComponentModel& model);
std::string model_to_json(const MixedComponentModel& model);
AnyModel model_from_json(const std::string& text);

void save_model(const AnyModel& model, const std::string& path);
AnyModel load_model(const std::string& path);

/// Per-iteration trace: component, iteration, criterion, delta_u,
/// delta_sigma2, max_change, then one sigma2 column per response.
void write_trace_csv(const ComponentModel& model, std::ostream& out);

}  // namespace scglrmix
