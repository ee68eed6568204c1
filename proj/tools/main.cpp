#include "foreauth/cli.hpp"

int main(int argc, char** argv) { return foreauth::cli::run(argc, argv); }
