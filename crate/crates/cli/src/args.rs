use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tessera_core::DEFAULT_BUDGET;

pub const DEFAULT_WORKSPACE: &str = ".tessera";
/// Handler-order seed used when `--seed` is not given.
pub const DEFAULT_SEED: u64 = 0;

#[derive(Debug, Parser)]
#[command(name = "tessera", version, about = "Model, deploy and converge service bundles")]
pub struct Cli {
    /// Workspace directory holding the model, federation, quotas and charms.
    #[arg(long, global = true, env = "TESSERA_WORKSPACE", default_value = DEFAULT_WORKSPACE)]
    pub workspace: PathBuf,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create a workspace with a master region in production.
    Init {
        #[arg(long, default_value = "master")]
        master: String,
        /// Master-region service endpoint, `service=url`; repeatable.
        /// Defaults to compute, volume and image under the master's name.
        #[arg(long = "endpoint", value_name = "SERVICE=URL")]
        endpoints: Vec<String>,
        /// Inventory seed (YAML) to enlist.
        #[arg(long)]
        inventory: Option<PathBuf>,
    },
    /// Manage charm definitions.
    #[command(subcommand)]
    Charm(CharmCommand),
    /// Deploy a bundle file.
    Deploy {
        bundle: PathBuf,
        #[command(flatten)]
        target: Target,
    },
    /// Add units to an application.
    AddUnit {
        app: String,
        #[arg(short = 'n', long = "num-units", default_value_t = 1)]
        count: u32,
        /// Placement directive: a machine number or `kind:machine`.
        #[arg(long)]
        to: Option<String>,
    },
    /// Remove a unit.
    RemoveUnit { unit: String },
    /// Set application options.
    Config {
        app: String,
        #[arg(value_name = "KEY=VALUE")]
        options: Vec<String>,
        #[arg(long, conflicts_with = "unexpose")]
        expose: bool,
        #[arg(long)]
        unexpose: bool,
    },
    /// Relate two endpoints, `app:endpoint`.
    AddRelation { a: String, b: String },
    /// Show the model.
    Status {
        #[arg(long, value_enum, default_value_t = StatusFormat::Text)]
        format: StatusFormat,
    },
    /// Process queued events until the model is quiescent.
    Converge {
        #[arg(long, default_value_t = DEFAULT_BUDGET)]
        budget: u64,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Queue an update-status event for the units of one or all applications.
    UpdateStatus { app: Option<String> },
    /// Compile, execute or render imperative plans.
    #[command(subcommand)]
    Plan(PlanCommand),
    /// Federated region lifecycle and catalog replication.
    #[command(subcommand)]
    Region(RegionCommand),
    /// Federated identities.
    #[command(subcommand)]
    Identity(IdentityCommand),
    /// Domains, projects, nested quotas and roles.
    #[command(subcommand)]
    Quota(QuotaCommand),
    /// Bare-metal inventory.
    #[command(subcommand)]
    Machine(MachineCommand),
}

/// Where a deployment is charged and placed.
#[derive(Debug, Args)]
pub struct Target {
    /// Project (id or unique name) charged for the deployment.
    #[arg(long)]
    pub project: Option<String>,
    /// Place only in this production region; default is any production region.
    #[arg(long)]
    pub region: Option<String>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum StatusFormat {
    Text,
    Json,
    Dot,
}

#[derive(Debug, Subcommand)]
pub enum CharmCommand {
    /// Register charm definition files.
    Add {
        #[arg(required = true)]
        files: Vec<PathBuf>,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum PlanCommand {
    /// Compile a bundle into a JSON Lines plan.
    Compile {
        bundle: PathBuf,
        /// Write the plan here instead of stdout.
        #[arg(short, long)]
        output: Option<PathBuf>,
    },
    /// Execute a plan (or a bundle, compiled first) against the model.
    Execute {
        file: PathBuf,
        #[command(flatten)]
        target: Target,
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
    /// Render a plan (or a bundle, compiled first) as DOT.
    Dot { file: PathBuf },
}

#[derive(Debug, Subcommand)]
pub enum RegionCommand {
    /// Register a candidate region; it enters validation.
    Register {
        name: String,
        #[arg(long = "endpoint", value_name = "SERVICE=URL", required = true)]
        endpoints: Vec<String>,
    },
    /// Run validation checks, promoting the region when all pass.
    Validate { name: String },
    /// Reject a region under validation.
    Reject { name: String },
    /// Refresh a production region's catalog replica.
    Sync { name: String },
    List,
}

#[derive(Debug, Subcommand)]
pub enum IdentityCommand {
    /// Map ePPNs to local users, creating them on first use.
    Map {
        #[arg(required = true)]
        eppns: Vec<String>,
    },
    List,
}

#[derive(Debug, Subcommand)]
pub enum QuotaCommand {
    /// Create a domain.
    Domain { name: String },
    /// Create a project under a domain or a project id.
    Create {
        name: String,
        #[arg(long)]
        parent: String,
    },
    /// Set a project's quota, e.g. `vcpus=100 ram=204800`.
    Set {
        project: String,
        #[arg(required = true, value_name = "COMPONENT=N")]
        quota: Vec<String>,
    },
    /// Show quotas and usage for one project or all.
    Show { project: Option<String> },
    /// Charge usage to a project.
    Charge {
        project: String,
        #[arg(required = true, value_name = "COMPONENT=N")]
        amount: Vec<String>,
    },
    /// Release usage from a project.
    Release {
        project: String,
        #[arg(required = true, value_name = "COMPONENT=N")]
        amount: Vec<String>,
    },
    /// Grant a role on a project or domain.
    Grant { target: String, user: String, role: String },
    /// Effective roles of a user on a project.
    Roles { project: String, user: String },
}

#[derive(Debug, Subcommand)]
pub enum MachineCommand {
    /// Enlist a bare-metal machine.
    Enlist {
        #[arg(long)]
        region: String,
        #[arg(long)]
        az: String,
        #[arg(long, default_value = "amd64")]
        arch: String,
        #[arg(long)]
        cores: u64,
        /// Memory in MiB.
        #[arg(long)]
        mem: u64,
        /// Disk in MiB.
        #[arg(long)]
        disk: u64,
        /// Host-aggregate property; repeatable.
        #[arg(long = "property")]
        properties: Vec<String>,
    },
    List,
    /// Release a machine the model does not use.
    Release { id: String },
    /// Declare an availability zone.
    AddZone { region: String, az: String },
    /// Enlist every machine of a seed file.
    Seed { file: PathBuf },
}
