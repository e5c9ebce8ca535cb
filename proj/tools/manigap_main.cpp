#include "cli_app.hpp"

int main(int argc, char** argv) { return manigap::cli::run(argc, argv); }
