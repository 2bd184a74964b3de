#include "cctkit/case_model.hpp"
#include "cctkit/builtin_cases_data.hpp"

namespace cctkit {

std::vector<std::string> builtin_case_names() {
  return {"smib", "ieee39_sync", "ieee39_gfl2"};
}

NetworkCase builtin_case(const std::string& name) {
  if (name == "smib") return case_from_json(detail::kSmibJson, "builtin:smib");
  if (name == "ieee39_sync")
    return case_from_json(detail::kIeee39SyncJson, "builtin:ieee39_sync");
  if (name == "ieee39_gfl2")
    return case_from_json(detail::kIeee39Gfl2Json, "builtin:ieee39_gfl2");
  throw Error("unknown builtin case '" + name +
              "' (available: smib, ieee39_sync, ieee39_gfl2)");
}

}  // namespace cctkit
