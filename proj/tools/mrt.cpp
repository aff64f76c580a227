#include "mrt/cli.hpp"

int main(int argc, char** argv) { return mrt::cli::run(argc, argv); }
