// xducer/error.h

// Copyright 2026  The xducer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//  http://www.apache.org/licenses/LICENSE-2.0
//
// THIS CODE IS PROVIDED *AS IS* BASIS, WITHOUT WARRANTIES OR CONDITIONS OF ANY
// KIND, EITHER EXPRESS OR IMPLIED, INCLUDING WITHOUT LIMITATION ANY IMPLIED
// WARRANTIES OR CONDITIONS OF TITLE, FITNESS FOR A PARTICULAR PURPOSE,
// MERCHANTABLITY OR NON-INFRINGEMENT.
// See the Apache 2 License for the specific language governing permissions and
// limitations under the License.

#ifndef XDUCER_ERROR_H_
#define XDUCER_ERROR_H_

#include <stdexcept>
#include <string>

namespace xducer {

// Every error raised by the library derives from Error so callers (the CLI in
// particular) can turn it into a one-line diagnostic.
class Error : public std::runtime_error {
 public:
  Error(const std::string &kind, const std::string &what)
      : std::runtime_error(kind + ": " + what), kind_(kind) {}
  const std::string &kind() const { return kind_; }

 private:
  std::string kind_;
};

#define XDUCER_DEFINE_ERROR(Name, tag)                                    \
  class Name : public Error {                                              \
   public:                                                                 \
    explicit Name(const std::string &what) : Error(tag, what) {}           \
  };

XDUCER_DEFINE_ERROR(DimensionError, "dimension error")
XDUCER_DEFINE_ERROR(NumericError, "numeric error")
XDUCER_DEFINE_ERROR(ContractError, "contract error")
XDUCER_DEFINE_ERROR(NoPathError, "no-path error")
XDUCER_DEFINE_ERROR(VocabError, "vocab error")
XDUCER_DEFINE_ERROR(LoadError, "load error")
XDUCER_DEFINE_ERROR(ConfigError, "config error")
XDUCER_DEFINE_ERROR(IoError, "io error")
XDUCER_DEFINE_ERROR(DivergenceError, "divergence")

#undef XDUCER_DEFINE_ERROR

}  // namespace xducer

#endif  // XDUCER_ERROR_H_
