def connect_to_db(client):
    '''
    Authenticate the service account against the database client
    and return the open connection.
    '''
