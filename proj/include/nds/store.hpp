#pragma once

#include <cstdint>
#include <string>

#include "nds/trajectory.hpp"

namespace nds::io {

/// Compact binary trajectory store. One file per split; the header records
/// system name, dt, seed and counts; rows are (trajectory id, t, state...,
/// control...). Hidden parameters live in a "<path>.params" sidecar keyed by
/// trajectory id so a split can be shipped without its answers.
void write_store(const std::string& path, const sys::Dataset& ds);
sys::Dataset read_store(const std::string& path);

/// Plain-text twin of the binary layout: id,t,x0..,u0.. rows.
void export_csv(const std::string& path, const sys::Dataset& ds);

/// FNV-1a fingerprint of a file's raw bytes.
std::string file_hash(const std::string& path);

bool file_exists(const std::string& path);

}  // namespace nds::io
