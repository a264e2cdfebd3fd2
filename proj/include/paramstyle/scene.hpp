// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paramstyle/image.hpp"

namespace paramstyle {

// Sixteen scene descriptors: 4 shape families x 4 palettes.
inline constexpr int kPaletteCount = 4;
inline constexpr int kShapeCount = 4;
inline constexpr int kPromptVocabularySize = kPaletteCount * kShapeCount;

const std::vector<std::string>& prompt_vocabulary();

// Returns the index of a descriptor, or -1.
int prompt_id_from_text(const std::string& text);

// Procedurally renders the scene named by prompt_id: a palette gradient
// background with a few shapes of the prompt's family. Deterministic in seed.
ImageBuffer generate_scene(int prompt_id, std::uint64_t seed, int size = 32);

// splitmix64 finalizer; used to derive per-item seeds from a run seed.
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t index);

}  // namespace paramstyle
