use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::path::Path;

use tessera_core::bundle::{parse_placement, EndpointRef};
use tessera_core::federation::default_required_services;
use tessera_core::ids::{MachineId, UnitId};
use tessera_core::provider::{parse_seed, EnlistSpec};
use tessera_core::{
    compile_plan, export_dot, parse_bundle, Convergence, Federation, ImperativePlan, Inventory, Model, QuotaSet,
};

use crate::args::*;
use crate::render;
use crate::workspace::{Lock, Workspace};
use crate::CliError;

#[derive(Debug, Default)]
pub(crate) struct Output {
    pub stdout: String,
    pub stderr: String,
}

impl Output {
    fn say(&mut self, line: impl Display) {
        self.stdout.push_str(&format!("{line}\n"));
    }

    fn raw(&mut self, text: &str) {
        self.stdout.push_str(text);
    }

    fn warn(&mut self, line: impl Display) {
        self.stderr.push_str(&format!("warning: {line}\n"));
    }
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::io(path, e))
}

/// Parse `key=value` arguments; later keys win.
fn pairs(items: &[String]) -> Result<BTreeMap<String, String>, CliError> {
    items
        .iter()
        .map(|item| match item.split_once('=') {
            Some((k, v)) if !k.is_empty() => Ok((k.to_string(), v.to_string())),
            _ => Err(CliError::Usage(format!("expected KEY=VALUE, got {item:?}"))),
        })
        .collect()
}

fn quota_set(items: &[String]) -> Result<QuotaSet, CliError> {
    Ok(QuotaSet::parse(&items.join(" "))?)
}

fn endpoint(text: &str) -> Result<EndpointRef, CliError> {
    Ok(text.parse()?)
}

/// A JSON Lines plan starts with a JSON object; anything else is a bundle.
fn load_plan(text: &str, ws: &Workspace) -> Result<ImperativePlan, CliError> {
    let first = text.lines().map(str::trim).find(|l| !l.is_empty());
    if first.is_some_and(|l| l.starts_with('{')) {
        Ok(ImperativePlan::from_jsonl(text)?)
    } else {
        Ok(compile_plan(&parse_bundle(text)?, &ws.store)?)
    }
}

fn apply_target(ws: &mut Workspace, target: &Target) -> Result<(), CliError> {
    if let Some(project) = &target.project {
        let id = ws.quota.find(project)?.id.clone();
        ws.model.set_project(Some(id));
    }
    let scope = match &target.region {
        Some(region) => ws.federation.placement_scope(region)?,
        None => ws.federation.production_scope(),
    };
    ws.model.set_scope(scope);
    Ok(())
}

pub(crate) fn run(cli: &Cli, out: &mut Output) -> Result<(), CliError> {
    let root = cli.workspace.as_path();
    if let Command::Init {
        master,
        endpoints,
        inventory,
    } = &cli.command
    {
        return init(root, master, endpoints, inventory.as_deref(), out);
    }
    if !Workspace::exists(root) {
        return Err(CliError::NoWorkspace(root.to_path_buf()));
    }
    let _lock = Lock::acquire(root)?;
    let mut ws = Workspace::load(root)?;
    let result = dispatch(&cli.command, &mut ws, out);
    match result {
        Ok(false) => Ok(()),
        Ok(true) => ws.save(),
        // Progress already made is kept: these are reports about state
        // the command produced, not failures to produce it.
        Err(e @ (CliError::BudgetExhausted(_) | CliError::ValidationFailed(_))) => {
            ws.save()?;
            Err(e)
        }
        Err(e) => Err(e),
    }
}

fn init(
    root: &Path,
    master: &str,
    endpoints: &[String],
    inventory: Option<&Path>,
    out: &mut Output,
) -> Result<(), CliError> {
    let endpoints = if endpoints.is_empty() {
        default_required_services()
            .into_iter()
            .map(|s| {
                let url = format!("https://{master}.example/{s}");
                (s, url)
            })
            .collect()
    } else {
        pairs(endpoints)?
    };
    let inventory = match inventory {
        Some(path) => Inventory::from_seed(&parse_seed(&read(path)?)?)?,
        None => Inventory::new(),
    };
    fs::create_dir_all(root).map_err(|e| CliError::io(root, e))?;
    let _lock = Lock::acquire(root)?;
    let machines = inventory.machines().count();
    Workspace::create(root, Federation::new(master, endpoints), Model::new(inventory))?;
    out.say(format!(
        "initialized {} with master region {master} and {machines} machines",
        root.display()
    ));
    Ok(())
}

/// Run one command against a loaded workspace. Returns whether the
/// workspace changed and must be saved.
fn dispatch(command: &Command, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    match command {
        Command::Init { .. } => unreachable!("handled before the workspace is loaded"),
        Command::Charm(c) => charm(c, ws, out),
        Command::Deploy { bundle, target } => {
            let bundle = parse_bundle(&read(bundle)?)?;
            apply_target(ws, target)?;
            let result = ws.model.deploy_bundle(&bundle, &ws.store, Some(&mut ws.quota))?;
            for note in &result.notes {
                out.warn(note);
            }
            out.say(format!(
                "deployed {} applications, {} units, {} relations on {} machines",
                result.applications.len(),
                result.units.len(),
                result.relations.len(),
                result.machines.len()
            ));
            if !result.charged.is_zero() {
                out.say(format!("charged {}: {}", ws.model.project().unwrap_or("-"), result.charged));
            }
            Ok(true)
        }
        Command::AddUnit { app, count, to } => {
            let placement = to.as_deref().map(|t| parse_placement(Some(t))).transpose()?;
            let units = ws.model.add_unit(app, *count, placement.as_ref(), Some(&mut ws.quota))?;
            if units.is_empty() {
                out.say("no units added");
                return Ok(false);
            }
            for unit in &units {
                let machine = &ws.model.unit(unit)?.machine;
                out.say(format!("added {unit} on {machine}"));
            }
            Ok(true)
        }
        Command::RemoveUnit { unit } => {
            let unit: UnitId = unit.parse()?;
            ws.model.remove_unit(&unit, Some(&mut ws.quota))?;
            out.say(format!("removed {unit}"));
            Ok(true)
        }
        Command::Config {
            app,
            options,
            expose,
            unexpose,
        } => {
            let options = pairs(options)?;
            if options.is_empty() && !expose && !unexpose {
                let application = ws.model.application(app)?;
                for (k, v) in &application.config {
                    out.say(format!("{k}={v}"));
                }
                return Ok(false);
            }
            let queued = ws.model.set_config(app, &options)?;
            if *expose || *unexpose {
                ws.model.set_exposed(app, *expose)?;
            }
            out.say(format!("queued {queued} config-changed events"));
            Ok(true)
        }
        Command::AddRelation { a, b } => {
            let id = ws.model.add_relation(&endpoint(a)?, &endpoint(b)?)?;
            out.say(format!("added relation {id}"));
            Ok(true)
        }
        Command::Status { format } => {
            match format {
                StatusFormat::Text => out.raw(&render::status(&ws.model)),
                StatusFormat::Json => out.say(ws.model.status_snapshot().to_json()),
                StatusFormat::Dot => out.raw(&export_dot(&ws.model)),
            }
            Ok(false)
        }
        Command::Converge { budget, seed } => match ws.model.run_to_convergence(*budget, *seed) {
            Convergence::Converged { events } => {
                let doc = ws.model.status_snapshot();
                out.say(format!(
                    "converged after {events} events: {} of {} units active",
                    doc.active_units(),
                    doc.units.len()
                ));
                out.say(format!("hash {}", doc.hash));
                Ok(true)
            }
            Convergence::BudgetExhausted { events } => Err(CliError::BudgetExhausted(events)),
        },
        Command::UpdateStatus { app } => {
            let queued = ws.model.update_status(app.as_deref())?;
            out.say(format!("queued {queued} update-status events"));
            Ok(true)
        }
        Command::Plan(c) => plan(c, ws, out),
        Command::Region(c) => region(c, ws, out),
        Command::Identity(c) => identity(c, ws, out),
        Command::Quota(c) => quota(c, ws, out),
        Command::Machine(c) => machine(c, ws, out),
    }
}

fn charm(command: &CharmCommand, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    match command {
        CharmCommand::Add { files } => {
            for file in files {
                let charm_ref = ws.add_charm(&read(file)?)?;
                out.say(format!("added {charm_ref}"));
            }
            Ok(true)
        }
        CharmCommand::List => {
            for (charm_ref, spec) in ws.store.iter() {
                out.say(format!("{charm_ref} {}", &spec.digest()[..12]));
            }
            Ok(false)
        }
    }
}

fn plan(command: &PlanCommand, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    match command {
        PlanCommand::Compile { bundle, output } => {
            let plan = compile_plan(&parse_bundle(&read(bundle)?)?, &ws.store)?;
            let text = plan.to_jsonl();
            match output {
                Some(path) => {
                    fs::write(path, &text).map_err(|e| CliError::io(path, e))?;
                    out.say(format!("wrote {} steps to {}", plan.steps.len(), path.display()));
                }
                None => out.raw(&text),
            }
            Ok(false)
        }
        PlanCommand::Execute { file, target, seed } => {
            let plan = load_plan(&read(file)?, ws)?;
            apply_target(ws, target)?;
            let warnings = ws.model.apply_plan(&plan, &ws.store, Some(&mut ws.quota), *seed)?;
            for w in warnings {
                out.warn(w);
            }
            out.say(format!("executed {} steps", plan.steps.len()));
            out.say(format!("hash {}", ws.model.state_hash()));
            Ok(true)
        }
        PlanCommand::Dot { file } => {
            let plan = load_plan(&read(file)?, ws)?;
            out.raw(&export_dot(&plan));
            Ok(false)
        }
    }
}

fn region(command: &RegionCommand, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    let fed = &mut ws.federation;
    match command {
        RegionCommand::Register { name, endpoints } => {
            let region = fed.register_region(name, pairs(endpoints)?)?;
            out.say(format!("region {} is {}", region.name, region.status));
        }
        RegionCommand::Validate { name } => {
            let report = fed.validate_region(name, ws.model.inventory_mut())?;
            out.say(&report);
            if !report.passed() {
                return Err(CliError::ValidationFailed(name.clone()));
            }
        }
        RegionCommand::Reject { name } => {
            fed.reject_region(name)?;
            out.say(format!("region {name} rejected"));
        }
        RegionCommand::Sync { name } => {
            let generation = fed.sync_catalog(name)?;
            out.say(format!("region {name} replica at catalog generation {generation}"));
        }
        RegionCommand::List => {
            for r in fed.regions() {
                let master = if r.name == fed.master_region { " (master)" } else { "" };
                let services: Vec<&str> = r.endpoints.keys().map(String::as_str).collect();
                out.say(format!("{} {}{master} [{}]", r.name, r.status, services.join(", ")));
            }
            return Ok(false);
        }
    }
    Ok(true)
}

fn identity(command: &IdentityCommand, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    match command {
        IdentityCommand::Map { eppns } => {
            for eppn in eppns {
                let user = ws.federation.map_identity(eppn)?;
                out.say(format!("{eppn} -> {user}"));
            }
            Ok(true)
        }
        IdentityCommand::List => {
            for m in ws.federation.identities() {
                out.say(format!("{} -> {} ({})", m.eppn, m.local_user, m.domain));
            }
            Ok(false)
        }
    }
}

fn quota(command: &QuotaCommand, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    let tree = &mut ws.quota;
    match command {
        QuotaCommand::Domain { name } => {
            tree.create_domain(name)?;
            out.say(format!("created domain {name}"));
        }
        QuotaCommand::Create { name, parent } => {
            let parent = match tree.find(parent) {
                Ok(p) => p.id.clone(),
                Err(_) => parent.clone(),
            };
            let id = tree.create_project(name, &parent)?;
            out.say(format!("created project {id}"));
        }
        QuotaCommand::Set { project, quota } => {
            let id = tree.find(project)?.id.clone();
            let q = quota_set(quota)?;
            tree.set_quota(&id, q)?;
            out.say(format!("{id}: quota {q}"));
        }
        QuotaCommand::Show { project } => {
            match project {
                Some(p) => {
                    let node = tree.find(p)?;
                    out.say(&node.id);
                    out.say(format!("  quota {}", node.quota));
                    out.say(format!("  usage {}", node.usage));
                }
                None => out.raw(&tree.usage_report()),
            }
            return Ok(false);
        }
        QuotaCommand::Charge { project, amount } => {
            let id = tree.find(project)?.id.clone();
            tree.charge(&id, &quota_set(amount)?)?;
            out.say(format!("{id}: usage {}", tree.project(&id)?.usage));
        }
        QuotaCommand::Release { project, amount } => {
            let id = tree.find(project)?.id.clone();
            tree.release(&id, &quota_set(amount)?)?;
            out.say(format!("{id}: usage {}", tree.project(&id)?.usage));
        }
        QuotaCommand::Grant { target, user, role } => {
            let target = match tree.find(target) {
                Ok(p) => p.id.clone(),
                Err(_) => target.clone(),
            };
            tree.grant_role(&target, user, role)?;
            out.say(format!("granted {role} on {target} to {user}"));
        }
        QuotaCommand::Roles { project, user } => {
            let id = tree.find(project)?.id.clone();
            let roles: BTreeSet<String> = tree.effective_roles(&id, user)?;
            out.say(roles.into_iter().collect::<Vec<_>>().join(" "));
            return Ok(false);
        }
    }
    Ok(true)
}

fn machine(command: &MachineCommand, ws: &mut Workspace, out: &mut Output) -> Result<bool, CliError> {
    match command {
        MachineCommand::Enlist {
            region,
            az,
            arch,
            cores,
            mem,
            disk,
            properties,
        } => {
            let id = ws.model.inventory_mut().enlist(EnlistSpec {
                region: region.clone(),
                az: az.clone(),
                arch: arch.clone(),
                cores: *cores,
                mem: *mem,
                disk: *disk,
                properties: properties.iter().cloned().collect(),
            })?;
            out.say(format!("enlisted machine {id}"));
        }
        MachineCommand::List => {
            out.raw(&render::machines(ws.model.inventory()));
            return Ok(false);
        }
        MachineCommand::Release { id } => {
            let id = MachineId::new(id.as_str());
            if ws.model.machines().contains(&id) {
                return Err(CliError::MachineInUse(id));
            }
            ws.model.inventory_mut().release_machine(&id)?;
            out.say(format!("released machine {id}"));
        }
        MachineCommand::AddZone { region, az } => {
            ws.model.inventory_mut().add_zone(region, az);
            out.say(format!("added zone {az} to region {region}"));
        }
        MachineCommand::Seed { file } => {
            let ids = ws.model.inventory_mut().apply_seed(&parse_seed(&read(file)?)?)?;
            out.say(format!("enlisted {} machines", ids.len()));
        }
    }
    Ok(true)
}
