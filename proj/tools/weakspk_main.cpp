#include "weakspk/pipeline.hpp"

int main(int argc, char** argv) { return weakspk::run_cli(argc, argv); }
