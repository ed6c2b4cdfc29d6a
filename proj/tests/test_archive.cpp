#include <filesystem>

#include "doctest.h"
#include "netmix/archive.hpp"
#include "netmix/errors.hpp"
#include "netmix/synthetic.hpp"

using namespace netmix;

TEST_CASE("fit archives round-trip exactly") {
  const auto truth = default_truth();
  const auto st = generate_synthetic_study(6, 8, truth, 31);
  auto spec = parse_model_spec(R"({"fixed": ["intercept", "C", "k", "coi", "dist"], "random": ["intercept", "nodes"]})");
  const auto fit = fit_two_part(st.table, spec, {});
  const std::string text = fit_archive_json(fit);
  const auto back = parse_fit_archive(text);
  CHECK(fit_archive_json(back) == text);
  CHECK(back.presence.beta == fit.presence.beta);
  CHECK(back.strength.beta_cov == fit.strength.beta_cov);
  CHECK(back.strength.vc.sigma2 == fit.strength.vc.sigma2);
  CHECK(back.presence.blups == fit.presence.blups);
  CHECK(back.presence.vc.at_bound == fit.presence.vc.at_bound);
  CHECK(back.centering.mean == fit.centering.mean);
  CHECK(back.presence.pql_iterations == fit.presence.pql_iterations);
  CHECK(back.strength_spec.response == Response::strength);
  CHECK(back.presence.trace.entries.size() == fit.presence.trace.entries.size());

  const auto path = std::filesystem::temp_directory_path() / "netmix_archive" / "fit.json";
  save_fit_archive(path, fit);
  CHECK(fit_archive_json(load_fit_archive(path)) == text);
  std::filesystem::remove_all(path.parent_path());
}

TEST_CASE("malformed archives are data errors") {
  CHECK_THROWS_AS(parse_fit_archive("{}"), DataError);
  CHECK_THROWS_AS(parse_fit_archive("not json"), DataError);
  CHECK_THROWS_AS(load_fit_archive("/nonexistent/fit.json"), DataError);
}
