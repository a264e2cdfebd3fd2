// Copyright 2026 The paramstyle Authors
// SPDX-License-Identifier: Apache-2.0

#define DOCTEST_CONFIG_IMPLEMENT
#include "doctest_torch.hpp"


int main(int argc, char** argv) {
  torch::set_num_threads(1);
  doctest::Context context;
  context.applyCommandLine(argc, argv);
  return context.run();
}
