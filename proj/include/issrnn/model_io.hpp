#pragma once

#include <string>

#include "issrnn/lm.hpp"

namespace issrnn {

// Single-file model format: an 8-byte magic, a little-endian u64 manifest
// length, the JSON manifest, then the raw little-endian row-major f32 payload.
// load(save(m)) is bit-identical.
void save_model(const Model& model, const std::string& path);
Model load_model(const std::string& path);

constexpr int kModelFormatVersion = 1;
constexpr const char kModelMagic[8] = {'I', 'S', 'S', 'M', 'O', 'D', 'E', 'L'};

}  // namespace issrnn
