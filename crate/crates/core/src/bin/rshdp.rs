fn main() {
    std::process::exit(rshdp_core::cli::main_exit_code());
}
