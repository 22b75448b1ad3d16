fn main() {
    let args: Vec<std::ffi::OsString> = std::env::args_os().skip(1).collect();
    let seed = std::env::var(qdimer_cli::config::SEED_ENV).ok();
    std::process::exit(qdimer_cli::main_with_args(args, seed));
}
