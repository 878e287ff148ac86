//! Each chapter of `book/` is attached as module docs so `cargo test` runs its samples.

macro_rules! chapter {
    ($name:ident, $file:literal) => {
        #[doc = include_str!(concat!("../../../book/src/", $file))]
        pub mod $name {}
    };
}

chapter!(overview, "overview.md");
chapter!(data, "data.md");
chapter!(macro_layer, "macro.md");
chapter!(agents, "agents.md");
chapter!(allocator, "allocator.md");
chapter!(risk, "risk.md");
chapter!(backtest, "backtest.md");
chapter!(cli, "cli.md");
