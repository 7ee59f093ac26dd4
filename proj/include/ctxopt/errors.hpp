// Copyright 2026 The ctxopt Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CTXOPT_ERRORS_HPP_
#define CTXOPT_ERRORS_HPP_

#include <cstdint>
#include <stdexcept>
#include <string>

namespace ctxopt {

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Playbook edits.
class UnknownEntryId : public Error {
 public:
  explicit UnknownEntryId(std::uint64_t id)
      : Error("unknown entry id " + std::to_string(id)), id_(id) {}
  std::uint64_t id() const { return id_; }

 private:
  std::uint64_t id_;
};

class EmptyContent : public Error {
 public:
  using Error::Error;
};

class MultilineContent : public Error {
 public:
  using Error::Error;
};

class InvalidPlaybook : public Error {
 public:
  using Error::Error;
};

// Raised when an operation is called outside its contract, e.g. reflecting
// on a passing trace.
class PreconditionViolation : public Error {
 public:
  using Error::Error;
};

class AgentFailure : public Error {
 public:
  using Error::Error;
};

// A model backend returned text that could not be parsed into the expected
// structure within its retry budget.
class MalformedModelOutput : public Error {
 public:
  MalformedModelOutput(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

class ConfigError : public Error {
 public:
  using Error::Error;
};

// Model transport.
class TransportError : public Error {
 public:
  using Error::Error;
};

class RemoteError : public Error {
 public:
  RemoteError(const std::string& what, int status)
      : Error(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class ExhaustedError : public Error {
 public:
  ExhaustedError(const std::string& what, int attempts)
      : Error(what), attempts_(attempts) {}
  int attempts() const { return attempts_; }

 private:
  int attempts_;
};

}  // namespace ctxopt

#endif  // CTXOPT_ERRORS_HPP_
