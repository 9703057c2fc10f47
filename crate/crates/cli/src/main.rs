fn main() {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    if let Ok(raw) = std::env::var("AVOIDANCE_THREADS") {
        match raw.parse::<usize>() {
            Ok(threads) if threads > 0 => {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(threads)
                    .build_global()
                    .expect("the global pool is configured once");
            }
            _ => {
                eprintln!("error: AVOIDANCE_THREADS must be a positive integer, got `{raw}`");
                std::process::exit(avoidance_cli::EXIT_USAGE);
            }
        }
    }
    std::process::exit(avoidance_cli::run(std::env::args_os()));
}
