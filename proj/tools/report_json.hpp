#pragma once

#include "json.hpp"
#include "rcm/corrector.hpp"
#include "rcm/environment.hpp"
#include "rcm/moser.hpp"
#include "rcm/qfclt.hpp"
#include "rcm/stats.hpp"

namespace rcmlab {

using nlohmann::json;

// non-finite values become null
json num(double v);
json to_json(const rcm::Matrix& m);
json to_json(const rcm::Quantiles& q);
json to_json(const rcm::TestResult& t);
json to_json(const rcm::TrendResult& t);
json to_json(const rcm::MomentCheck& m);
json to_json(const rcm::AppendixReport& r);
json to_json(const rcm::InterpolationSuite& s);
json to_json(const rcm::ConstantTrendReport& r);
json to_json(const rcm::SublinearityTable& t);
json to_json(const rcm::QfcltReport& r);
json to_json(const rcm::EnvironmentProcessReport& r);

}  // namespace rcmlab
