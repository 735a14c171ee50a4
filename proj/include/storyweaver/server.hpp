#pragma once

#include <string>

#include "storyweaver/session.hpp"

namespace httplib {
class Server;
}

namespace storyweaver {

// Registers the session API on an existing server.
void register_routes(httplib::Server& server, SessionManager& sessions);

// Blocks serving the API until the process is stopped.
void serve(SessionManager& sessions, const std::string& host, int port);

}  // namespace storyweaver
