#pragma once

#include <cstdint>
#include <optional>
#include <set>
#include <string>

#include "mlcomp/tir.hpp"

namespace mlcomp::passes::detail {

/// Pure and unable to trap: safe to delete when dead or to execute speculatively.
bool is_removable(const tir::Instruction& in, const tir::Module& m);

/// Like is_removable, but excludes loads (memory may change inside a loop).
bool is_speculatable(const tir::Instruction& in);

std::optional<std::int64_t> power_of_two_exponent(std::int64_t v);

/// Every block label and register name appearing in the function.
std::set<std::string> names_in(const tir::Function& f);

std::string fresh_label(const tir::Function& f, const std::string& base);

}  // namespace mlcomp::passes::detail
