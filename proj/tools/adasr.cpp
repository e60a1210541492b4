#include "adasr/cli.hpp"

int main(int argc, char** argv) { return adasr::cli_dispatch(argc, argv); }
