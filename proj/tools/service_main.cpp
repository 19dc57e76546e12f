// wnn_service: HTTP JSON API hosting one live weightless agent per user.

#include <cstdlib>
#include <iostream>

#include "CLI11.hpp"

#include "wnnrec/service.hpp"

namespace {

std::string env_or(const char* name, std::string fallback)
{
    const char* v = std::getenv(name);
    return v && *v ? std::string(v) : std::move(fallback);
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Weightless-agent recommendation service"};

    std::string host = "0.0.0.0";
    int port = std::atoi(env_or("WNNREC_PORT", "8080").c_str());
    std::string metadata = env_or("WNNREC_METADATA", "movies_metadata.csv");
    std::string links = env_or("WNNREC_LINKS", "links.csv");
    std::string snapshots = env_or("WNNREC_SNAPSHOTS", "snapshots");
    bool recurrent_context = false;

    app.add_option("--host", host, "Bind address");
    app.add_option("--port", port, "Listen port (env WNNREC_PORT)");
    app.add_option("--metadata", metadata, "movies_metadata.csv (env WNNREC_METADATA)");
    app.add_option("--links", links, "links.csv (env WNNREC_LINKS)");
    app.add_option("--snapshots", snapshots, "Agent snapshot directory (env WNNREC_SNAPSHOTS)");
    app.add_flag("--recurrent-context", recurrent_context,
                 "Keep each agent's inner state between requests instead of resetting it");

    CLI11_PARSE(app, argc, argv);

    try {
        auto catalog = std::make_shared<const wnnrec::MovieCatalog>(wnnrec::load_catalog(metadata, links));
        wnnrec::ServiceConfig cfg;
        cfg.snapshot_dir = snapshots;
        cfg.stateless_context = !recurrent_context;
        wnnrec::AgentRegistry registry(catalog, cfg);

        httplib::Server server;
        wnnrec::install_routes(server, registry);
        std::cerr << "wnn_service: " << catalog->catalog().movies.size() << " movies, " << registry.size()
                  << " agents restored; listening on " << host << ':' << port << '\n';
        if (!server.listen(host, port)) {
            std::cerr << "wnn_service: cannot listen on " << host << ':' << port << '\n';
            return 1;
        }
    } catch (const std::exception& e) {
        std::cerr << "wnn_service: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
