#include "fgprobe/backend.hpp"

#include "fgprobe/errors.hpp"

namespace fgprobe {

void BackendRequest::validate() const {
  if (prompt.empty()) throw BackendError(BackendErrc::kInvalidRequest, "empty prompt");
  if (max_new_tokens < 1) throw BackendError(BackendErrc::kInvalidRequest, "max_new_tokens must be >= 1");
}

BackendResponse CountingBackend::complete(const BackendRequest& req) const {
  ++calls_;
  return inner_.complete(req);
}

}  // namespace fgprobe
