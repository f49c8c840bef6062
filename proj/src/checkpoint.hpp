#pragma once

#include "model.hpp"
#include "train.hpp"

#include <memory>
#include <optional>
#include <string>

namespace actseg {

// Binary container: magic "ACTSEG01", a little-endian u64 byte length, a
// UTF-8 key=value manifest (model family, dimensions, vocabularies, merges,
// training state, array declarations), then little-endian 64-bit float
// arrays in manifest order. save -> load -> save is byte-identical.
void save_checkpoint(const Model& m, const std::string& path,
                     const TrainState* train = nullptr);

// Rejects bad magic, truncation, and shape mismatches naming the array.
// When expected_family is given, a checkpoint of any other family is
// rejected.
std::unique_ptr<Model> load_checkpoint(const std::string& path, TrainState* train = nullptr,
                                       std::optional<Family> expected_family = std::nullopt);

} // namespace actseg
