
namespace = 'urn:listforge:warehouse'  # Namespace of every warehouse document

prefixes = dict(  # Namespace prefixes used when writing documents
    actors_info='act',
    threads='thr'
)

warehouse_files = dict(  # On-disk layout of a warehouse, relative to the warehouse directory
    actors_info='actors_info.xml',
    threads_dir='threads',
    quarantine_dir='quarantine'
)

default_dirs = dict(  # Used when neither a flag nor an environment variable says otherwise
    warehouse='./warehouse',
    config='./config'
)

config_env_var = 'LISTFORGE_CONFIG'

config_files = dict(  # Locations of configuration files, relative to the config directory
    merges='merges.csv',
    gateways='gateways.txt',
    aliases='aliases.csv',
    domain_map='domain_map.csv',
    institutions='institutions.csv',
    public_suffixes='public_suffixes.txt'
)

reply_prefix_pattern = r'^\s*(?:re|fwd?|aw|sv)\s*(?:\[\d+\])?\s*:\s*'  # Stripped repeatedly, case-insensitive
subject_window_days = 90  # Subject-fallback threading only looks this far back

non_person_tokens = {  # Local parts that name a role or a robot rather than a person
    'admin', 'announce', 'bugzilla', 'daemon', 'editor', 'editors', 'help', 'info', 'list', 'listmaster',
    'mailer', 'majordomo', 'noreply', 'no-reply', 'owner', 'postmaster', 'request', 'root', 'staff', 'support',
    'team', 'test', 'w3c', 'webmaster', 'xquery', 'xslt', 'xml'
}

corporate_suffixes = {  # Dropped from institution names before alias lookup
    'co', 'company', 'corp', 'corporation', 'gmbh', 'inc', 'incorporated', 'limited', 'llc', 'ltd', 'plc', 'sa'
}

derived_role = 'poster'  # Role of functions derived from posting-address history

unresolved_row = dict(  # q1 pseudo-row collecting messages whose sender owns no actor
    actor_id='unresolved',
    name='(unresolved)'
)

chart = dict(  # Fixed chart geometry and styling so rendering is reproducible
    figsize=(10, 4.5),
    hashsalt='listforge',
    direct_fills=['white', 'black', '0.6', '0.85'],
    recovered_hatches={'reported-by': '////', 'comments-from': '\\\\\\\\'},
    edgecolor='black'
)

exit_codes = dict(
    ok=0,
    data_error=1,
    usage_error=2
)
