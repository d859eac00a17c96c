#pragma once

#include "json.hpp"

#include "nnaee/adjoint.hpp"
#include "nnaee/model.hpp"
#include "nnaee/neural.hpp"
#include "nnaee/scene.hpp"

// JSON forms of the configuration types. Readers fill absent keys with defaults and
// reject unknown keys with ConfigError.

namespace nnaee {

using json = nlohmann::json;

void to_json(json &j, const ModelConfig &c);
void from_json(const json &j, ModelConfig &c);
void to_json(json &j, const SensorGeometry &g);
void from_json(const json &j, SensorGeometry &g);
void to_json(json &j, const SourceWaveform &w);
void from_json(const json &j, SourceWaveform &w);

namespace scene {
void to_json(json &j, const SceneParams &p);
void from_json(const json &j, SceneParams &p);
} // namespace scene

namespace adjoint {
/// initial_field is not serialized.
void to_json(json &j, const InversionOptions &o);
void from_json(const json &j, InversionOptions &o);
} // namespace adjoint

namespace nn {
void to_json(json &j, const TrainOptions &o);
void from_json(const json &j, TrainOptions &o);
/// Wiring, activations, widths and normalization; weights are stored separately.
json topology_to_json(const NetworkBundle &bundle);
/// Network with zero parameters shaped by the document.
NetworkBundle bundle_from_topology(const json &doc);
} // namespace nn

/// Throws ConfigError naming the first key of `j` not in `allowed`.
void reject_unknown_keys(const json &j, std::initializer_list<const char *> allowed,
                         const char *what);

} // namespace nnaee
