// Copyright (c) 2026 rp8 contributors
// SPDX-License-Identifier: Apache-2.0

#include <cstdio>

#include "rp8/format.hpp"

int main() {
    std::printf("rp8 CLI placeholder\n");
    return 0;
}
