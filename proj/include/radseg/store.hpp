/*
 *  Copyright 2026 The radseg Authors
 *
 *  Licensed under the Apache License, Version 2.0 (the "License");
 *  you may not use this file except in compliance with the License.
 *  You may obtain a copy of the License at
 *
 *      http://www.apache.org/licenses/LICENSE-2.0
 *
 *  Unless required by applicable law or agreed to in writing, software
 *  distributed under the License is distributed on an "AS IS" BASIS,
 *  WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 *  See the License for the specific language governing permissions and
 *  limitations under the License.
 */

#pragma once

// Workspace layout used by the command-line stages. Every artifact is a raw
// little-endian array with a JSON sidecar; slice files are named
// sub<SSS>_sl<KK>_<what>.raw.

#include "radseg/acquisition.hpp"
#include "radseg/phantom.hpp"
#include "radseg/recon.hpp"
#include "radseg/t2map.hpp"

#include <filesystem>
#include <string>
#include <vector>

namespace radseg::store {

namespace fs = std::filesystem;

std::string slice_stem(int subject, int slice);
fs::path slice_file(const fs::path& dir, int subject, int slice, const std::string& what);

void write_phantom(const fs::path& dir, int subject, int slice, const phantom::Phantom& ph);
phantom::Phantom read_phantom(const fs::path& dir, int subject, int slice);

/// Interleaved complex64 samples, views x samples; the sidecar carries angles,
/// echo indices and sequence parameters.
void write_kspace(const fs::path& raw, const acquisition::RadialKSpace& ks);
acquisition::RadialKSpace read_kspace(const fs::path& raw);

void write_echoes(const fs::path& raw, const recon::EchoImageSet& set);
recon::EchoImageSet read_echoes(const fs::path& raw);

/// Two float32 planes (t2_ms, pd) plus a uint8 validity plane in a second file.
void write_t2map(const fs::path& raw, const fs::path& valid_raw, const t2map::T2Map& m);
t2map::T2Map read_t2map(const fs::path& raw, const fs::path& valid_raw);

/// Raises DataError naming the path when it does not exist.
void require_file(const fs::path& p);

}  // namespace radseg::store
