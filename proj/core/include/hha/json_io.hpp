#pragma once

#include "hha/types.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <string>
#include <string_view>

namespace hha::io {

/// {"rows": r, "cols": c, "data": [row-major values]}
nlohmann::json matrix_to_json(const Mat& m);
Mat matrix_from_json(const nlohmann::json& j);

nlohmann::json vector_to_json(const Vec& v);
Vec vector_from_json(const nlohmann::json& j);

/// 64-bit FNV-1a.
std::uint64_t fnv1a(std::string_view bytes);
/// fnv1a as 16 lowercase hex digits.
std::string fnv1a_hex(std::string_view bytes);

}  // namespace hha::io
