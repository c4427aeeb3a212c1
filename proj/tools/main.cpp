// Command-line entry point: runs one or more experiment configuration files.

#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "ctxrec/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"ctxrec - context-aware recommendation engine"};
    app.name("ctxrec");

    std::vector<std::string> configs;
    app.add_option("-c,--config,configs", configs,
                   "experiment configuration file(s), run in order")
        ->expected(-1);

    CLI11_PARSE(app, argc, argv);

    if (configs.empty()) {
        std::cerr << "usage: ctxrec -c <setting.conf> [<more.conf>...]\n";
        return 2;
    }
    return ctxrec::run(configs, std::cout, std::cerr);
}
