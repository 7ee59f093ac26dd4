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

// HTTPS transport. Part of the ctxopt_http library, which the test suite
// does not link.

#ifndef CTXOPT_HTTP_TRANSPORT_HPP_
#define CTXOPT_HTTP_TRANSPORT_HPP_

#include <memory>

#include "ctxopt/model_client.hpp"

namespace ctxopt {

class HttpTransport : public Transport {
 public:
  HttpResponse send(const HttpRequest& request) override;
};

std::shared_ptr<Transport> make_http_transport();

}  // namespace ctxopt

#endif  // CTXOPT_HTTP_TRANSPORT_HPP_
