fn main() {
    std::process::exit(eps_planner_harness::cli::main_exit_code());
}
