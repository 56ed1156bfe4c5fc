#ifndef SENTGRAPH_CHECKPOINT_HPP
#define SENTGRAPH_CHECKPOINT_HPP

#include <string>

#include "sentgraph/model.hpp"

namespace sentgraph::model {

// Flat "key = value" config text ('#' starts a comment). Parsing starts from
// default values; unknown keys and malformed values are errors.
std::string config_to_text(const ModelConfig& config);
ModelConfig config_from_text(const std::string& text);
ModelConfig load_config_file(const std::string& path);

// Binary checkpoint: magic "SGCKPT01", a format version, the config and
// vocabulary as embedded JSON, then named little-endian float64 tensors with
// shape headers. Loading validates the layout against a freshly initialized
// model, so a corrupt or mismatched file fails loudly.
std::string serialize_checkpoint(const ModelState& state);
ModelState parse_checkpoint(const std::string& bytes);

void save_checkpoint(const ModelState& state, const std::string& path);
ModelState load_checkpoint(const std::string& path);

}  // namespace sentgraph::model

#endif  // SENTGRAPH_CHECKPOINT_HPP
