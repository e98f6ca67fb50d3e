// Copyright 2026 The btw Authors
// SPDX-License-Identifier: Apache-2.0

#include "btw/cli.hpp"

int main(int argc, char** argv) { return btw::cli::run_cli(argc, argv); }
