#include "hier/cli.hpp"

int main(int argc, char** argv) { return hier::cli::run(argc, argv); }
