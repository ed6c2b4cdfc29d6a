#pragma once

// JSON archive of a two-part fit. Doubles are written in shortest round-trip
// form, so save -> load reproduces every estimate exactly.

#include <filesystem>
#include <string>
#include <string_view>

#include "netmix/mixedfit.hpp"

namespace netmix {

std::string fit_archive_json(const TwoPartFit& fit);
TwoPartFit parse_fit_archive(std::string_view json_text);

void save_fit_archive(const std::filesystem::path& path, const TwoPartFit& fit);
TwoPartFit load_fit_archive(const std::filesystem::path& path);

}  // namespace netmix
