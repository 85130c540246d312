#include "taskres/cli.hpp"

int main(int argc, char** argv) { return taskres::run_cli(argc, argv); }
