// Copyright 2026 The Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <httplib.h>

#include "kgc/error.hpp"
#include "kgc/knowledge.hpp"

namespace kgc {
namespace {

struct SplitUrl {
  std::string origin;  // scheme://host[:port]
  std::string path;
};

SplitUrl split_url(const std::string& url) {
  const auto scheme_end = url.find("://");
  if (scheme_end == std::string::npos) throw TransportError("not an absolute URL: " + url);
  const auto path_start = url.find('/', scheme_end + 3);
  if (path_start == std::string::npos) return {url, "/"};
  return {url.substr(0, path_start), url.substr(path_start)};
}

void set_timeouts(httplib::Client& cli, double timeout_s) {
  const auto sec = static_cast<time_t>(timeout_s);
  const auto usec = static_cast<time_t>((timeout_s - static_cast<double>(sec)) * 1e6);
  cli.set_connection_timeout(sec, usec);
  cli.set_read_timeout(sec, usec);
  cli.set_write_timeout(sec, usec);
}

HttpResponse convert(const httplib::Result& res, const std::string& url) {
  if (!res) throw TransportError(url + ": " + httplib::to_string(res.error()));
  return HttpResponse{res->status, res->body};
}

}  // namespace

HttpResponse HttplibTransport::get(const std::string& url, double timeout_s) {
  const auto parts = split_url(url);
  httplib::Client cli(parts.origin);
  set_timeouts(cli, timeout_s);
  cli.set_follow_location(true);
  return convert(cli.Get(parts.path), url);
}

HttpResponse HttplibTransport::post_json(
    const std::string& url, const std::string& body,
    const std::vector<std::pair<std::string, std::string>>& headers, double timeout_s) {
  const auto parts = split_url(url);
  httplib::Client cli(parts.origin);
  set_timeouts(cli, timeout_s);
  httplib::Headers h;
  for (const auto& [k, v] : headers) h.emplace(k, v);
  return convert(cli.Post(parts.path, h, body, "application/json"), url);
}

}  // namespace kgc
