#include "dactd/transport.hpp"

#include <cmath>
#include <ostream>

namespace dactd {

void ChannelModel::validate() const {
  if (T1 < 0) throw ConfigurationError("T1 must be non-negative");
  if (T2 < 1) throw ConfigurationError("T2 must be positive");
  if (!(drop_prob >= 0.0 && drop_prob < 1.0))
    throw ConfigurationError("drop probability must lie in [0, 1)");
}

std::uint64_t fnv1a(const void* data, std::size_t size, std::uint64_t h) {
  const auto* bytes = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < size; ++i) {
    h ^= bytes[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

bool check_delivery_guarantee(const std::vector<SendRecord>& trace, int T1, int T2) {
  std::map<Edge, int> run;
  for (const auto& rec : trace) {
    if (rec.deliver_tick) {
      if (*rec.deliver_tick < rec.sent_tick || *rec.deliver_tick - rec.sent_tick > T2) return false;
      run[rec.edge] = 0;
    } else if (++run[rec.edge] > T1) {
      return false;
    }
  }
  return true;
}

void write_trace_csv(std::ostream& out, const std::vector<SendRecord>& trace) {
  out << "tick,src,dst,sent_tick,digest\n";
  for (const auto& rec : trace) {
    if (!rec.deliver_tick) continue;
    out << *rec.deliver_tick << ',' << rec.edge.src + 1 << ',' << rec.edge.dst + 1 << ','
        << rec.sent_tick << ',' << std::hex << rec.digest << std::dec << '\n';
  }
}

}  // namespace dactd
