// SPDX-FileCopyrightText: 2026 bbmld contributors
// SPDX-License-Identifier: Apache-2.0

#include "bbmld/cli.hpp"

int main(int argc, char** argv) { return bbmld::cli::run(argc, argv); }
