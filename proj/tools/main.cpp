#include "cli.hpp"

int main(int argc, char** argv) { return motifrep::cli::run(argc, argv); }
