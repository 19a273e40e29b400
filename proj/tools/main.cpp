#include "pdmr/cli.hpp"

#include <iostream>

int main(int argc, char **argv)
{
  return pdmr::run_cli(argc, argv, std::cout, std::cerr);
}
