#include "tscam/cli.hpp"

int main(int argc, char** argv) { return tscam::dispatch(argc, argv); }
