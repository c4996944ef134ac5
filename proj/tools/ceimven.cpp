// Copyright 2026 The ceimven Authors
// SPDX-License-Identifier: Apache-2.0

#include "ceimven/cli.hpp"

int main(int argc, char** argv) { return ceimven::cli_main(argc, argv); }
