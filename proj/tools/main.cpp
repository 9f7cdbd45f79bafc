#include "sumix/cli.hpp"

int main(int argc, char** argv) { return sumix::run(argc, argv); }
