/*
    Licensed under the Apache License, Version 2.0 (the "License");
    you may not use this file except in compliance with the License.
    You may obtain a copy of the License at

        https://www.apache.org/licenses/LICENSE-2.0

    Unless required by applicable law or agreed to in writing, software
    distributed under the License is distributed on an "AS IS" BASIS,
    WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
    See the License for the specific language governing permissions and
    limitations under the License.
*/

#ifndef ELSTREAM_ERRORS_HPP_
#define ELSTREAM_ERRORS_HPP_

#include <stdexcept>
#include <string>

namespace elstream {

/// Base for every error raised by the engine.
class Error : public std::runtime_error {
  public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

#define ELSTREAM_DEFINE_ERROR(NAME)                                                               \
    class NAME : public Error {                                                                   \
      public:                                                                                     \
        explicit NAME(const std::string& what) : Error(std::string(#NAME ": ") + what) {}         \
    }

ELSTREAM_DEFINE_ERROR(MonotonicityViolation);
ELSTREAM_DEFINE_ERROR(UnknownSource);
ELSTREAM_DEFINE_ERROR(LogicFailure);
ELSTREAM_DEFINE_ERROR(SerializationFailure);
ELSTREAM_DEFINE_ERROR(HashMismatch);
ELSTREAM_DEFINE_ERROR(VersionMismatch);
ELSTREAM_DEFINE_ERROR(FanoutOverflow);
ELSTREAM_DEFINE_ERROR(AuthenticationFailure);
ELSTREAM_DEFINE_ERROR(ReplayDetected);
ELSTREAM_DEFINE_ERROR(PageTooLarge);
ELSTREAM_DEFINE_ERROR(TargetUnavailable);
ELSTREAM_DEFINE_ERROR(AlreadyMigrating);
ELSTREAM_DEFINE_ERROR(SnapshotFailure);
ELSTREAM_DEFINE_ERROR(Divergence);
ELSTREAM_DEFINE_ERROR(UnknownLink);
ELSTREAM_DEFINE_ERROR(ConfigError);
ELSTREAM_DEFINE_ERROR(StallDetected);
ELSTREAM_DEFINE_ERROR(AttestationFailure);

#undef ELSTREAM_DEFINE_ERROR

}  // namespace elstream

#endif  // ELSTREAM_ERRORS_HPP_
