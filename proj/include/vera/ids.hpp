#pragma once

#include <string>

namespace vera {

// Generates a 26-character Crockford base32 identifier: 48 bits of
// millisecond timestamp followed by 80 bits of monotonic entropy. Ids created
// by one process are strictly increasing in lexicographic order.
std::string new_id();

// Milliseconds since the Unix epoch encoded in an id produced by new_id().
long long id_timestamp_ms(const std::string& id);

// ISO-8601 UTC timestamp with millisecond precision.
std::string utc_timestamp();

}  // namespace vera
