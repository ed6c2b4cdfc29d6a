#include <algorithm>

#include "netmix/errors.hpp"
#include "netmix/mixedfit.hpp"

namespace netmix {

namespace {

template <class Fn>
auto labeled(const char* part, Fn&& fn) -> decltype(fn()) {
  try {
    return fn();
  } catch (const SeparationError& e) {
    throw SeparationError(std::string(part) + " part: " + e.what());
  } catch (const ConvergenceError& e) {
    throw ConvergenceError(std::string(part) + " part: " + e.what());
  } catch (const SpecError& e) {
    throw SpecError(std::string(part) + " part: " + e.what());
  } catch (const DataError& e) {
    throw DataError(std::string(part) + " part: " + e.what());
  }
}

ModelSpec with_response(ModelSpec spec, Response r) {
  spec.response = r;
  return spec;
}

}  // namespace

ModelSpec drop_zero_variance(const LmmFit& fit, const ModelSpec& spec) {
  ModelSpec out = spec;
  for (std::size_t c = 0; c < fit.vc.names.size(); ++c) {
    if (!fit.vc.at_bound[c]) continue;
    const std::string& name = fit.vc.names[c];
    if (name == "node") {
      std::erase(out.random, RandomTerm::nodes);
    } else if (auto t = random_term_from_key(name)) {
      std::erase(out.random, *t);
    } else if (name.starts_with("node")) {
      out.dropped_nodes.push_back(std::stoi(name.substr(4)) - 1);
    }
  }
  std::sort(out.dropped_nodes.begin(), out.dropped_nodes.end());
  out.dropped_nodes.erase(std::unique(out.dropped_nodes.begin(), out.dropped_nodes.end()), out.dropped_nodes.end());
  return out;
}

TwoPartFit fit_two_part(const DyadTable& centered, const ModelSpec& spec, const TwoPartOptions& opts) {
  TwoPartFit fit;
  fit.spec = spec;
  fit.presence_spec = with_response(spec, Response::presence);
  fit.strength_spec = with_response(spec, Response::strength);
  fit.n_nodes = centered.n_nodes;
  if (!centered.centering) throw SpecError("dyad table must be centered before fitting");
  fit.centering = *centered.centering;
  fit.presence = labeled("presence", [&] { return pql_fit(build_design(centered, fit.presence_spec), opts.pql); });
  fit.strength = labeled("strength", [&] { return reml_fit(build_design(centered, fit.strength_spec), {}, opts.reml); });
  return fit;
}

TwoPartFit reduce_two_part(const DyadTable& centered, const TwoPartFit& full, const TwoPartOptions& opts) {
  TwoPartFit out = full;
  const auto ps = drop_zero_variance(full.presence, full.presence_spec);
  if (ps.random != full.presence_spec.random || ps.dropped_nodes != full.presence_spec.dropped_nodes) {
    out.presence_spec = ps;
    out.presence = labeled("presence", [&] { return pql_fit(build_design(centered, ps), opts.pql); });
  }
  const auto ss = drop_zero_variance(full.strength, full.strength_spec);
  if (ss.random != full.strength_spec.random || ss.dropped_nodes != full.strength_spec.dropped_nodes) {
    out.strength_spec = ss;
    out.strength = labeled("strength", [&] { return reml_fit(build_design(centered, ss), {}, opts.reml); });
  }
  return out;
}

}  // namespace netmix
