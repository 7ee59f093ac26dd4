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

#include "ctxopt/http_transport.hpp"

#include "ctxopt/errors.hpp"
#include "httplib.h"

namespace ctxopt {

HttpResponse HttpTransport::send(const HttpRequest& request) {
  // Split "scheme://host[:port]/path" into the client origin and the path.
  const auto scheme_end = request.url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("bad url: " + request.url);
  const auto path_start = request.url.find('/', scheme_end + 3);
  const std::string origin = request.url.substr(0, path_start);
  const std::string path =
      path_start == std::string::npos ? "/" : request.url.substr(path_start);

  httplib::Client client(origin);
  const auto secs = std::chrono::duration_cast<std::chrono::seconds>(request.timeout);
  client.set_connection_timeout(secs);
  client.set_read_timeout(secs);
  client.set_write_timeout(secs);

  httplib::Headers headers;
  std::string content_type = "application/json";
  for (const auto& [k, v] : request.headers) {
    if (k == "Content-Type") {
      content_type = v;
    } else {
      headers.emplace(k, v);
    }
  }
  auto result = client.Post(path, headers, request.body, content_type);
  if (!result) throw TransportError("request failed: " + httplib::to_string(result.error()));
  return {result->status, result->body};
}

std::shared_ptr<Transport> make_http_transport() { return std::make_shared<HttpTransport>(); }

}  // namespace ctxopt
